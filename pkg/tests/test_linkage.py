"""Blocking, block scoring, declaration, and one-to-one resolution tests."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from problink.comparators import MISSING, NUMERIC, STRING_JW, FieldConfig, build_agreement_vector
from problink.config import DEFAULT_FIELDS
from problink.fs_model import ModelParams, count_patterns, estimate_error_rates, posterior
from problink.linkage_engine import (
    Block,
    ScoredPair,
    block_by_state,
    block_codes,
    block_pattern_counts,
    declare_matches,
    error_rate_terms,
    link_block,
    merge_linked,
    pattern_space,
    resolve_one_to_one,
)
from problink.schema_ingest import CanonicalRecord


def rec(record_id, state, city=None, zip_code=None, days=None, killed=None, source="A"):
    return CanonicalRecord(
        record_id=record_id, source=source, state=state, city=city, zip=zip_code,
        event_date=None, days_since_start=days, num_killed=killed)


FIELDS = DEFAULT_FIELDS  # city jw, days tol 1, num_killed, zip


class TestBlocking:
    def test_grouping_and_orphans(self):
        a = [rec("a1", "MA"), rec("a2", "MA"), rec("a3", "RI"), rec("a4", "VT")]
        b = [rec("b1", "MA"), rec("b2", "RI"), rec("b3", "RI"), rec("b4", "NH"),
             rec("b5", "NH")]
        blocks, report = block_by_state(a, b)
        assert [blk.key for blk in blocks] == ["MA", "RI"]
        assert blocks[0].n_pairs == 2
        assert blocks[1].n_pairs == 2
        assert report.orphan_keys_a == ("VT",)
        assert report.orphan_keys_b == ("NH",)
        assert report.orphan_records_a == 1
        assert report.orphan_records_b == 2

    def test_no_cross_state_pairs(self):
        a = [rec("a1", "MA"), rec("a2", "RI")]
        b = [rec("b1", "MA"), rec("b2", "RI")]
        blocks, _ = block_by_state(a, b)
        for blk in blocks:
            states = {r.state for r in blk.records_a} | {r.state for r in blk.records_b}
            assert states == {blk.key}


class TestPatternCodes:
    def test_space_size(self):
        assert len(pattern_space(FIELDS)) == 4 * 3 * 3 * 3
        assert pattern_space(FIELDS)[0] == (MISSING, MISSING, MISSING, MISSING)
        assert pattern_space(FIELDS)[-1] == (2, 1, 1, 1)

    def test_codes_match_per_pair_vectors(self):
        a = [rec("a1", "MA", "SPRINGFIELD", "01101", 100, 2),
             rec("a2", "MA", "BOSTON", None, 101, 0),
             rec("a3", "MA", None, "02139", 500, 1)]
        b = [rec("b1", "MA", "SPRINGFELD", "01101", 101, 2, source="B"),
             rec("b2", "MA", "WORCESTER", "01609", None, 0, source="B")]
        block = Block("MA", tuple(a), tuple(b))
        codes = block_codes(block, FIELDS)
        space = pattern_space(FIELDS)
        for i, ra in enumerate(a):
            for j, rb in enumerate(b):
                assert space[codes[i, j]] == build_agreement_vector(ra, rb, FIELDS)

    def test_counts_match_count_patterns(self):
        a = [rec(f"a{i}", "MA", "BOSTON", "02139", 10 * i, 1) for i in range(5)]
        b = [rec(f"b{j}", "MA", "BOSTON", None, 10 * j + 1, 1, source="B")
             for j in range(4)]
        block = Block("MA", tuple(a), tuple(b))
        direct = count_patterns(
            build_agreement_vector(ra, rb, FIELDS) for ra in a for rb in b)
        assert block_pattern_counts(block, FIELDS).entries == direct.entries


def two_params():
    return ModelParams(
        0.2,
        (np.array([0.05, 0.95]),),
        (np.array([0.9, 0.1]),),
    )


ONE_FIELD = (FieldConfig("num_killed", NUMERIC),)


class TestLinkBlock:
    def test_pooled_scoring(self):
        a = [rec("a1", "MA", killed=1), rec("a2", "MA", killed=2)]
        b = [rec("b1", "MA", killed=1, source="B"), rec("b2", "MA", killed=3, source="B")]
        block = Block("MA", tuple(a), tuple(b))
        params = two_params()
        score, pairs = link_block(block, ONE_FIELD, params=params)
        assert score.pooled
        assert score.diagnostics is None
        assert score.counts.total_pairs == 4
        expect_agree = posterior((1,), params)
        expect_disagree = posterior((0,), params)
        by_ids = {(p.id_a, p.id_b): p for p in pairs}
        assert len(by_ids) == 4
        assert by_ids[("a1", "b1")].xi == pytest.approx(expect_agree, abs=1e-12)
        assert by_ids[("a2", "b2")].xi == pytest.approx(expect_disagree, abs=1e-12)
        assert by_ids[("a1", "b1")].pattern == (1,)

    def test_retain_floor_drops_low_pairs(self):
        a = [rec("a1", "MA", killed=1), rec("a2", "MA", killed=2)]
        b = [rec("b1", "MA", killed=1, source="B"), rec("b2", "MA", killed=3, source="B")]
        block = Block("MA", tuple(a), tuple(b))
        _, pairs = link_block(block, ONE_FIELD, params=two_params(), retain_floor=0.5)
        assert {(p.id_a, p.id_b) for p in pairs} == {("a1", "b1")}

    def test_own_fit(self):
        a = [rec(f"a{i}", "MA", city, zip_code, days, killed)
             for i, (city, zip_code, days, killed) in enumerate(
                 [("BOSTON", "02139", 100, 1), ("WORCESTER", "01609", 200, 2),
                  ("SPRINGFIELD", "01101", 300, 0), ("LOWELL", "01850", 400, 1)] * 5)]
        b = [rec(f"b{i}", "MA", city, zip_code, days, killed, source="B")
             for i, (city, zip_code, days, killed) in enumerate(
                 [("BOSTON", "02139", 100, 1), ("WORCESTER", "01609", 201, 2),
                  ("SPRINGFELD", "01101", 300, 0), ("CAMBRIDGE", "02139", 955, 3)] * 5)]
        block = Block("MA", tuple(a), tuple(b))
        score, pairs = link_block(block, FIELDS, retain_floor=0.85)
        assert not score.pooled
        assert score.diagnostics is not None
        assert score.params.lam > 0
        matched_ids = {(p.id_a, p.id_b) for p in pairs}
        assert ("a0", "b0") in matched_ids


class TestDeclareAndResolve:
    def make(self, id_a, id_b, xi, key="MA"):
        return ScoredPair(id_a, id_b, key, (1,), xi)

    def test_threshold_inclusive(self):
        pairs = [self.make("a1", "b1", 0.85), self.make("a2", "b2", 0.8499999)]
        declared = declare_matches(pairs, 0.85)
        assert [(p.id_a, p.id_b) for p in declared] == [("a1", "b1")]

    def test_greedy_prefers_higher_posterior(self):
        pairs = [self.make("a1", "b1", 0.9), self.make("a1", "b2", 0.99),
                 self.make("a2", "b2", 0.95)]
        kept = resolve_one_to_one(pairs)
        assert {(p.id_a, p.id_b) for p in kept} == {("a1", "b2")}
        # a2/b2 loses b2 to the stronger pair and a2 has no other candidate

    def test_tie_breaks_are_stable(self):
        # equal posteriors sort by ids: (a1,b1) wins, then (a1,b2) and (a2,b1)
        # are both blocked, leaving exactly one kept pair
        pairs = [self.make("a2", "b1", 0.9), self.make("a1", "b1", 0.9),
                 self.make("a1", "b2", 0.9)]
        kept = resolve_one_to_one(pairs)
        assert [(p.id_a, p.id_b) for p in kept] == [("a1", "b1")]

    @given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8),
                              st.floats(0.0, 1.0, allow_nan=False)),
                    max_size=40))
    @settings(max_examples=120, deadline=None)
    def test_one_to_one_invariants(self, raw):
        pairs = [self.make(f"a{i}", f"b{j}", xi) for i, j, xi in raw]
        kept = resolve_one_to_one(pairs)
        ids_a = [p.id_a for p in kept]
        ids_b = [p.id_b for p in kept]
        assert len(ids_a) == len(set(ids_a))
        assert len(ids_b) == len(set(ids_b))
        kept_set = {(p.id_a, p.id_b, p.xi) for p in kept}
        all_set = {(p.id_a, p.id_b, p.xi) for p in pairs}
        assert kept_set <= all_set
        # maximality: every dropped pair conflicts with something kept
        for p in pairs:
            if (p.id_a, p.id_b, p.xi) not in kept_set:
                assert p.id_a in set(ids_a) or p.id_b in set(ids_b)

    @given(st.lists(st.tuples(st.integers(0, 8), st.integers(0, 8),
                              st.floats(0.0, 1.0, allow_nan=False)),
                    max_size=40))
    @settings(max_examples=120, deadline=None)
    def test_match_count_monotone_in_threshold(self, raw):
        pairs = [self.make(f"a{i}", f"b{j}", xi) for i, j, xi in raw]
        sizes = []
        for t in np.linspace(0.0, 1.0, 10):
            kept = resolve_one_to_one(declare_matches(pairs, float(t)))
            sizes.append(len(kept))
        for earlier, later in zip(sizes, sizes[1:]):
            assert later <= earlier


class TestErrorRateTerms:
    def test_matches_streaming_estimator(self):
        a = [rec(f"a{i}", "MA", killed=i % 3) for i in range(6)]
        b = [rec(f"b{j}", "MA", killed=j % 2, source="B") for j in range(5)]
        block = Block("MA", tuple(a), tuple(b))
        params = two_params()
        score, pairs = link_block(block, ONE_FIELD, params=params, retain_floor=0.0)
        threshold = 0.5
        fp, n, und, tot = error_rate_terms(score.counts, params, threshold)
        fdr = fp / n if n else 0.0
        fnr = und / tot if tot else 0.0
        ref_fdr, ref_fnr = estimate_error_rates(
            (p.xi, p.xi >= threshold) for p in pairs)
        assert fdr == pytest.approx(ref_fdr, abs=1e-12)
        assert fnr == pytest.approx(ref_fnr, abs=1e-12)


class TestMergeLinked:
    def test_rows_and_ordering(self):
        from datetime import date

        ra = CanonicalRecord("a1", "A", "MA", "BOSTON", "02139",
                             date(2016, 3, 1), 790, 2)
        rb = CanonicalRecord("b9", "B", "MA", "BOSTN", None, date(2016, 3, 2), 791, 2)
        ra2 = CanonicalRecord("a2", "A", "CA", "FRESNO", "93701", None, None, 1)
        rb2 = CanonicalRecord("b1", "B", "CA", "FRESNO", "93701", None, None, 1)
        pairs = [ScoredPair("a1", "b9", "MA", (2, 1, 1, MISSING), 0.99),
                 ScoredPair("a2", "b1", "CA", (2, MISSING, 1, 1), 0.92)]
        ids = {("a1", "b9"): "P000002", ("a2", "b1"): "P000001"}
        rows = merge_linked(pairs, {"a1": ra, "a2": ra2}, {"b9": rb, "b1": rb2}, ids)
        assert [row["pair_id"] for row in rows] == ["P000001", "P000002"]
        assert rows[0]["state"] == "CA"
        assert rows[1]["a_city"] == "BOSTON"
        assert rows[1]["b_city"] == "BOSTN"
        assert rows[1]["b_zip"] == ""
        assert rows[1]["a_event_date"] == "2016-03-01"
        assert rows[1]["xi"] == "0.990000"
        assert rows[1]["pattern"] == "2 1 1 -1"
