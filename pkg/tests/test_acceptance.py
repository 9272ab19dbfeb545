"""Acceptance gate: one test per shipping requirement, one PASS/FAIL line each.

Every test here exercises a released behaviour end to end at its stated
tolerance. Slow paths (full-scale run, kill-and-restart durability) live
here on purpose; the suite is still expected to finish in well under a
minute on one core.
"""

import csv
import random
import signal
import socket
import subprocess
import sys
import time
from contextlib import contextmanager
from pathlib import Path
from time import perf_counter

import httpx
import pytest

from oracles import (
    em_reference_pairs,
    grid_fit_1field_full,
    grid_max_1field_q,
    grid_max_loglik_multifield,
    jaro_winkler_reference,
)
from problink.comparators import jaro_winkler
from problink.config import load_config, with_overrides
from problink.evaluation import (
    SyntheticSpec,
    deterministic_baseline,
    generate_synthetic,
    load_truth,
    score_against_truth,
    sensitivity_report,
)
from problink.fs_model import count_patterns, default_init, em_fit, observed_loglik
from problink.linkage_engine import ingest_datasets, run_pipeline
from problink.schema_ingest import default_eligibility


@pytest.fixture
def verdict(request):
    """Context manager factory printing one PASS/FAIL line per criterion.

    Emits through the capture manager so the line reaches the terminal even
    when the wrapped checks pass.
    """
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def emit(line):
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print(line, flush=True)
        else:
            print(line, flush=True)

    @contextmanager
    def scope(name):
        try:
            yield
        except BaseException:
            emit(f"ACCEPTANCE {name}: FAIL")
            raise
        emit(f"ACCEPTANCE {name}: PASS")

    return scope


@pytest.fixture(scope="module")
def recovery(tmp_path_factory):
    """Default-size synthetic corpus linked once; shared by several tests."""
    root = tmp_path_factory.mktemp("recovery")
    paths = generate_synthetic(SyntheticSpec(seed=42), root / "corpus")
    config = load_config(paths.config_path)
    start = perf_counter()
    result = run_pipeline(config, root / "run1")
    seconds = perf_counter() - start
    sides = ingest_datasets(config, root / "ingest")
    return {"root": root, "paths": paths, "config": config,
            "result": result, "seconds": seconds, "sides": sides}


def read_merged_pairs(path):
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return [(row["a_record_id"], row["b_record_id"])
                for row in csv.DictReader(fh)]


class TestAdjudicationArithmetic:
    def test_counts_849_72_21_reproduce_exactly_and_fast(self, verdict):
        with verdict("adjudication-arithmetic"):
            report = sensitivity_report((849, 72, 21))
            assert report["counts"] == {"match": 849, "nonmatch": 72,
                                        "undetermined": 21, "total": 942}
            assert report["proportions"] == {"match": 0.9013, "nonmatch": 0.0764,
                                             "undetermined": 0.0223}
            assert report["percent"] == {"match": "90.1%", "nonmatch": "7.6%",
                                         "undetermined": "2.2%"}
            assert report["review_precision"] == pytest.approx(849 / 942)
            assert report["review_precision_display"] == "90.12%"
            elapsed = min(_timed(lambda: sensitivity_report((849, 72, 21)))
                          for _ in range(10))
            assert elapsed < 1e-3, f"took {elapsed * 1e3:.3f} ms"


def _timed(fn):
    start = perf_counter()
    fn()
    return perf_counter() - start


class TestStringSimilarity:
    CORPUS = [
        ("MARTHA", "MARHTA"), ("DIXON", "DICKSONX"), ("DWAYNE", "DUANE"),
        ("SPRINGFIELD", "SPRINGFELD"), ("BOSTON", "BOSTN"), ("AB", "BA"),
        ("CHICAGO", "CHICAGO"), ("X", "Y"), ("", "ANY"), ("AAAA", "AAAAAA"),
        ("SAINT LOUIS", "ST LOUIS"), ("NEW YORK", "NEWYORK"),
        ("ALBUQUERQUE", "ALBUQERQUE"), ("Y", ""), ("PEORIA", "PERIA"),
    ]

    def test_similarity_matches_independent_reference(self, verdict):
        with verdict("string-similarity"):
            assert jaro_winkler("MARTHA", "MARHTA") == pytest.approx(
                0.9611111111111111, abs=1e-9)
            assert jaro_winkler("DIXON", "DICKSONX") == pytest.approx(
                0.8133333333333332, abs=1e-9)
            assert jaro_winkler("IDENTICAL", "IDENTICAL") == 1.0
            for s1, s2 in self.CORPUS:
                expected = jaro_winkler_reference(s1, s2)
                assert jaro_winkler(s1, s2) == pytest.approx(expected, abs=1e-9), \
                    (s1, s2)


def random_binary_instance(rng, n_fields, n_pairs):
    """Draw pairs from a random two-class model over binary fields."""
    lam = rng.uniform(0.2, 0.8)
    m = [rng.uniform(0.65, 0.95) for _ in range(n_fields)]
    u = [rng.uniform(0.05, 0.35) for _ in range(n_fields)]
    patterns = []
    for _ in range(n_pairs):
        probs = m if rng.random() < lam else u
        patterns.append(tuple(int(rng.random() < p) for p in probs))
    return count_patterns(patterns)


class TestEstimationReachesGlobalOptimum:
    def test_em_attains_brute_force_grid_maximum(self, verdict):
        with verdict("estimation-global-optimum"):
            rng = random.Random(2026)
            plans = [(1, rng.randint(40, 200)) for _ in range(12)]
            plans += [(2, rng.randint(40, 200)) for _ in range(5)]
            plans += [(3, rng.randint(40, 200)) for _ in range(4)]
            assert len(plans) >= 20
            for n_fields, n_pairs in plans:
                counts = random_binary_instance(rng, n_fields, n_pairs)
                params, diag = em_fit(counts, (2,) * n_fields,
                                      tol=1e-10, max_iter=20000)
                trace = diag.loglik_trace
                assert all(b >= a - 1e-10 for a, b in zip(trace, trace[1:]))
                ll_em = observed_loglik(counts, params)
                if n_fields == 1:
                    n_agree = counts.entries.get((1,), 0)
                    n_dis = counts.entries.get((0,), 0)
                    best_ll, _ = grid_max_1field_q(n_agree, n_dis, step=1e-3)
                    assert ll_em >= best_ll - 1e-3
                    coarse_ll, _ = grid_fit_1field_full(n_agree, n_dis, step=0.02)
                    assert ll_em >= coarse_ll - 1e-3
                else:
                    step = 0.05 if n_fields == 2 else 0.1
                    grid_ll = grid_max_loglik_multifield(
                        dict(counts.entries), n_fields, step)
                    assert ll_em >= grid_ll - 1e-3


class TestCompressedCountsSuffice:
    def test_count_fit_equals_per_pair_fit(self, verdict):
        with verdict("count-sufficiency"):
            levels = (3, 2, 2)
            for seed in (101, 202, 303):
                rng = random.Random(seed)
                patterns = []
                for _ in range(200):
                    # genuine mixture: matches concentrate on the top level,
                    # non-matches on the bottom, with occasional missingness
                    is_match = rng.random() < 0.3
                    pat = []
                    for n in levels:
                        if rng.random() < 0.15:
                            pat.append(-1)
                        elif rng.random() < (0.85 if is_match else 0.2):
                            pat.append(n - 1)
                        else:
                            pat.append(rng.randrange(n - 1))
                    patterns.append(tuple(pat))
                counts = count_patterns(patterns)
                init = default_init(counts, levels)
                fitted, diag = em_fit(counts, levels, init=init,
                                      tol=0.0, max_iter=40)
                assert diag.iterations == 40
                assert not diag.label_swapped
                ref_lam, ref_m, ref_u = em_reference_pairs(
                    patterns, list(levels), init.lam,
                    [list(row) for row in init.pi_m],
                    [list(row) for row in init.pi_u], n_iter=40)
                assert fitted.lam == pytest.approx(ref_lam, abs=1e-9)
                for k in range(len(levels)):
                    for lvl in range(levels[k]):
                        assert fitted.pi_m[k][lvl] == pytest.approx(
                            ref_m[k][lvl], abs=1e-9)
                        assert fitted.pi_u[k][lvl] == pytest.approx(
                            ref_u[k][lvl], abs=1e-9)


class TestPlantedMatchRecovery:
    def test_f1_beats_bar_and_exact_join_baseline(self, recovery, verdict):
        with verdict("planted-match-recovery"):
            truth = load_truth(recovery["paths"].truth_path)
            assert len(truth) == 600
            pairs = read_merged_pairs(recovery["result"].out_dir / "merged.csv")
            score = score_against_truth(pairs, truth)
            assert score.f1 >= 0.95, score.as_dict()
            kept_a = recovery["sides"]["A"]["kept"]
            kept_b = recovery["sides"]["B"]["kept"]
            base = score_against_truth(deterministic_baseline(kept_a, kept_b),
                                       truth)
            assert score.recall > base.recall, (score.recall, base.recall)
            assert recovery["seconds"] < 5.0, recovery["seconds"]


class TestFullScaleRun:
    def test_full_corpus_links_within_time_budget(self, tmp_path, verdict):
        with verdict("full-scale-time-budget"):
            states = tuple(state for state, _, _ in default_eligibility())
            assert len(states) == 41
            spec = SyntheticSpec(n_a=36245, n_b=30592, n_overlap=26478,
                                 seed=17, states=states)
            paths = generate_synthetic(spec, tmp_path / "corpus")
            config = load_config(paths.config_path)
            start = perf_counter()
            result = run_pipeline(config, tmp_path / "run")
            seconds = perf_counter() - start
            report = result.report
            assert report["datasets"]["site_a"]["records"] == 36245
            assert report["datasets"]["site_b"]["records"] == 30592
            assert report["blocking"]["blocks"] == 41
            assert report["pairs"]["matched_one_to_one"] > 20000
            assert seconds <= 120.0, f"took {seconds:.1f}s"


class TestStructuralInvariants:
    def test_one_to_one_blocking_monotonicity_and_determinism(self, recovery, verdict):
        with verdict("structural-invariants"):
            result = recovery["result"]
            config = recovery["config"]
            root = recovery["root"]

            ids_a = [p.id_a for p in result.matched]
            ids_b = [p.id_b for p in result.matched]
            assert len(ids_a) == len(set(ids_a))
            assert len(ids_b) == len(set(ids_b))

            state_of = {}
            for side in recovery["sides"].values():
                for rec in side["kept"]:
                    state_of[rec.record_id] = rec.state
            for pair in result.retained:
                assert state_of[pair.id_a] == pair.block_key
                assert state_of[pair.id_b] == pair.block_key

            matched_counts = []
            thresholds = (0.50, 0.55, 0.60, 0.65, 0.70, 0.75,
                          0.80, 0.85, 0.90, 0.99)
            for i, threshold in enumerate(thresholds):
                swept = run_pipeline(with_overrides(config, threshold=threshold),
                                     root / f"sweep{i}")
                matched_counts.append(swept.report["pairs"]["matched_one_to_one"])
            assert all(b <= a for a, b in zip(matched_counts, matched_counts[1:])), \
                matched_counts

            rerun = run_pipeline(config, root / "run2")
            for name in ("merged.csv", "review_queue.csv", "report.yaml",
                         Path("params") / "pooled.txt"):
                first = (result.out_dir / name).read_bytes()
                second = (rerun.out_dir / name).read_bytes()
                assert first == second, f"{name} differs between reruns"


QUEUE_HEADER = ("pair_id,state,xi,pattern,"
                "a_record_id,a_city,a_zip,a_event_date,a_days_since_start,"
                "a_num_killed,b_record_id,b_city,b_zip,b_event_date,"
                "b_days_since_start,b_num_killed")


def write_ten_pair_queue(path):
    lines = [QUEUE_HEADER]
    for i in range(1, 11):
        lines.append(
            f"P{i:06d},MA,0.{60 + i}0000,2 1 -1 1,"
            f"A{i},BOSTON,02139,2016-03-01,790,1,"
            f"B{i},BOSTN,,2016-03-02,791,1")
    path.write_text("\n".join(lines) + "\n")


def wait_for_server(port, deadline=20.0):
    end = time.monotonic() + deadline
    url = f"http://127.0.0.1:{port}/api/summary"
    while time.monotonic() < end:
        try:
            response = httpx.get(url, timeout=1.0)
            if response.status_code == 200:
                return
        except httpx.HTTPError:
            pass
        time.sleep(0.1)
    raise TimeoutError(f"review server on port {port} never came up")


def free_port():
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def start_server(queue, log, port):
    return subprocess.Popen(
        [sys.executable, "-m", "problink.cli", "review", "serve",
         "--queue", str(queue), "--log", str(log), "--port", str(port)],
        stdout=subprocess.DEVNULL, stderr=subprocess.DEVNULL)


class TestReviewDurability:
    def test_kill_and_restart_preserves_acknowledged_decisions(self, tmp_path, verdict):
        with verdict("review-durability"):
            queue = tmp_path / "queue.csv"
            log = tmp_path / "decisions.ndjson"
            write_ten_pair_queue(queue)
            port = free_port()
            proc = start_server(queue, log, port)
            try:
                wait_for_server(port)
                base = f"http://127.0.0.1:{port}"

                # contract checks against the live server, no UI installed
                root_page = httpx.get(f"{base}/")
                assert root_page.status_code == 200
                assert "api" in root_page.text.lower()
                assert httpx.get(f"{base}/api/pairs/NOPE").status_code == 404
                bad = httpx.post(f"{base}/api/pairs/P000001/decision",
                                 json={"decision": "bogus"})
                assert bad.status_code == 400

                for pair_id, decision in (("P000001", "match"),
                                          ("P000002", "nonmatch"),
                                          ("P000003", "undetermined"),
                                          ("P000004", "match")):
                    response = httpx.post(f"{base}/api/pairs/{pair_id}/decision",
                                          json={"decision": decision,
                                                "reviewer": "alice"})
                    assert response.status_code == 200
                # overwrite one decision; the newest entry must win
                assert httpx.post(f"{base}/api/pairs/P000004/decision",
                                  json={"decision": "nonmatch",
                                        "reviewer": "bob"}).status_code == 200
                before = httpx.get(f"{base}/api/summary").json()
                assert before["decided"] == 4
                assert before["counts"] == {"match": 1, "nonmatch": 2,
                                            "undetermined": 1}
                proc.send_signal(signal.SIGKILL)
                proc.wait(timeout=10)
            finally:
                if proc.poll() is None:
                    proc.kill()
                    proc.wait(timeout=10)

            port2 = free_port()
            proc2 = start_server(queue, log, port2)
            try:
                wait_for_server(port2)
                base2 = f"http://127.0.0.1:{port2}"
                after = httpx.get(f"{base2}/api/summary").json()
                assert after == before
                pair = httpx.get(f"{base2}/api/pairs/P000004").json()
                assert pair["decision"] == "nonmatch"
                assert pair["reviewer"] == "bob"
                nxt = httpx.get(f"{base2}/api/pairs/next").json()
                assert nxt["pair"]["pair_id"] == "P000005"
            finally:
                proc2.kill()
                proc2.wait(timeout=10)
