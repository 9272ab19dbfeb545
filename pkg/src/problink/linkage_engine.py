"""Blocked linkage pipeline.

Records are partitioned by state, every within-block pair is scored against
the fitted mixture, pairs at or above the threshold are declared matches, and
declared matches are resolved one to one by descending posterior. Blocks too
small to support their own fit are scored with parameters pooled across all
blocks.
"""

from __future__ import annotations

import csv
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from .comparators import FieldConfig, field_level_matrix
from .config import LinkageConfig
from .fs_model import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    EMDiagnostics,
    ModelParams,
    PatternCounts,
    em_fit,
    posterior_table,
)
from .schema_ingest import (
    SOURCE_A,
    SOURCE_B,
    CanonicalRecord,
    SchemaError,
    filter_eligibility,
    filter_scope,
    load_csv,
    write_rejects_csv,
)

MERGE_FIELDS = ("record_id", "city", "zip", "event_date", "days_since_start", "num_killed")


class PipelineError(RuntimeError):
    """A stage failed; the stage name maps to a distinct CLI exit code."""

    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


@dataclass(frozen=True)
class Block:
    key: str
    records_a: tuple[CanonicalRecord, ...]
    records_b: tuple[CanonicalRecord, ...]

    @property
    def n_pairs(self) -> int:
        return len(self.records_a) * len(self.records_b)

    @property
    def min_side(self) -> int:
        return min(len(self.records_a), len(self.records_b))


@dataclass(frozen=True)
class BlockingReport:
    orphan_keys_a: tuple[str, ...]
    orphan_keys_b: tuple[str, ...]
    orphan_records_a: int
    orphan_records_b: int


@dataclass(frozen=True)
class ScoredPair:
    id_a: str
    id_b: str
    block_key: str
    pattern: tuple[int, ...]
    xi: float


@dataclass(frozen=True)
class BlockScore:
    key: str
    counts: PatternCounts
    params: Optional[ModelParams]  # filled with pooled params for small blocks
    diagnostics: Optional[EMDiagnostics]
    pooled: bool


def block_by_state(records_a: Sequence[CanonicalRecord],
                   records_b: Sequence[CanonicalRecord]) -> tuple[list[Block], BlockingReport]:
    """Group records by state; keys present on only one side become orphans."""
    by_a: dict[str, list[CanonicalRecord]] = {}
    by_b: dict[str, list[CanonicalRecord]] = {}
    for rec in records_a:
        by_a.setdefault(rec.state, []).append(rec)
    for rec in records_b:
        by_b.setdefault(rec.state, []).append(rec)
    shared = sorted(set(by_a) & set(by_b))
    blocks = [Block(key, tuple(by_a[key]), tuple(by_b[key])) for key in shared]
    only_a = sorted(set(by_a) - set(by_b))
    only_b = sorted(set(by_b) - set(by_a))
    report = BlockingReport(
        orphan_keys_a=tuple(only_a),
        orphan_keys_b=tuple(only_b),
        orphan_records_a=sum(len(by_a[k]) for k in only_a),
        orphan_records_b=sum(len(by_b[k]) for k in only_b),
    )
    return blocks, report


def pattern_space(fields: Sequence[FieldConfig]) -> list[tuple[int, ...]]:
    """Every possible agreement pattern (missing included), in code order."""
    axes = [range(-1, fc.levels) for fc in fields]
    return [tuple(combo) for combo in itertools.product(*axes)]


def block_codes(block: Block, fields: Sequence[FieldConfig]) -> np.ndarray:
    """Integer pattern code for every pair in the block.

    Codes follow the row-major enumeration of pattern_space, so one bincount
    over this matrix yields exact pattern counts for the whole block.
    """
    dims = [fc.levels + 1 for fc in fields]
    codes = np.zeros((len(block.records_a), len(block.records_b)), dtype=np.int32)
    stride = 1
    for fc, dim in zip(reversed(fields), reversed(dims)):
        values_a = [getattr(r, fc.field) for r in block.records_a]
        values_b = [getattr(r, fc.field) for r in block.records_b]
        lvl = field_level_matrix(values_a, values_b, fc).astype(np.int32)
        codes += (lvl + 1) * stride
        stride *= dim
    return codes


def block_pattern_counts(block: Block, fields: Sequence[FieldConfig]) -> PatternCounts:
    space = pattern_space(fields)
    vec = np.bincount(block_codes(block, fields).ravel(), minlength=len(space))
    return _counts_from_vec(vec, space)


def _counts_from_vec(vec: np.ndarray, space: list[tuple[int, ...]]) -> PatternCounts:
    entries = {space[i]: int(c) for i, c in enumerate(vec) if c}
    return PatternCounts(entries, int(vec.sum()))


def link_block(block: Block, fields: Sequence[FieldConfig],
               params: Optional[ModelParams] = None, retain_floor: float = 0.0,
               em_tol: float = DEFAULT_TOL,
               em_max_iter: int = DEFAULT_MAX_ITER) -> tuple[BlockScore, list[ScoredPair]]:
    """Score one block.

    With params given, pairs are scored under them (pooled mode); otherwise
    the block gets its own EM fit first. Pairs with posterior below
    retain_floor are dropped to keep the output proportional to the matches.
    """
    space = pattern_space(fields)
    codes = block_codes(block, fields)
    vec = np.bincount(codes.ravel(), minlength=len(space))
    counts = _counts_from_vec(vec, space)
    pooled = params is not None
    diag = None
    if params is None:
        params, diag = em_fit(counts, [fc.levels for fc in fields],
                              tol=em_tol, max_iter=em_max_iter)
    xi_by_code = posterior_table(space, params)
    pairs = _pairs_at_or_above(block, codes, xi_by_code, space, retain_floor)
    return BlockScore(block.key, counts, params, diag, pooled), pairs


def _pairs_at_or_above(block: Block, codes: np.ndarray, xi_by_code: np.ndarray,
                       space: list[tuple[int, ...]],
                       floor: float) -> list[ScoredPair]:
    keep = xi_by_code[codes] >= floor
    out = []
    for i, j in zip(*np.nonzero(keep)):
        code = int(codes[i, j])
        out.append(ScoredPair(
            id_a=block.records_a[i].record_id,
            id_b=block.records_b[j].record_id,
            block_key=block.key,
            pattern=space[code],
            xi=float(xi_by_code[code]),
        ))
    return out


def declare_matches(pairs: Sequence[ScoredPair], threshold: float) -> list[ScoredPair]:
    """Pairs whose posterior clears the threshold (inclusive)."""
    return [p for p in pairs if p.xi >= threshold]


def resolve_one_to_one(pairs: Sequence[ScoredPair]) -> list[ScoredPair]:
    """Greedy one-to-one assignment by descending posterior.

    Ties break on record ids so reruns keep the same pairs. Each record id
    appears at most once per side in the result.
    """
    used_a: set[str] = set()
    used_b: set[str] = set()
    kept = []
    for pair in sorted(pairs, key=lambda p: (-p.xi, p.id_a, p.id_b)):
        if pair.id_a in used_a or pair.id_b in used_b:
            continue
        used_a.add(pair.id_a)
        used_b.add(pair.id_b)
        kept.append(pair)
    return kept


def error_rate_terms(counts: PatternCounts, params: ModelParams,
                     threshold: float) -> tuple[float, float, float, float]:
    """Per-block sums feeding the aggregate FDR and FNR estimates.

    Returns (false-positive mass among declared, declared count,
    posterior mass left undeclared, total posterior mass).
    """
    patterns = sorted(counts.entries)
    c = np.array([counts.entries[p] for p in patterns], dtype=np.float64)
    xi = posterior_table(patterns, params)
    declared = xi >= threshold
    fp_mass = float(np.dot(c[declared], 1.0 - xi[declared]))
    declared_n = float(c[declared].sum())
    total_xi = float(np.dot(c, xi))
    undeclared_xi = float(np.dot(c[~declared], xi[~declared]))
    return fp_mass, declared_n, undeclared_xi, total_xi


def merge_linked(pairs: Sequence[ScoredPair], records_a: dict[str, CanonicalRecord],
                 records_b: dict[str, CanonicalRecord],
                 pair_ids: dict[tuple[str, str], str]) -> list[dict]:
    """Flat rows with both sides of every pair, ordered by state then ids."""
    rows = []
    for pair in sorted(pairs, key=lambda p: (p.block_key, p.id_a, p.id_b)):
        ra = records_a[pair.id_a]
        rb = records_b[pair.id_b]
        row = {
            "pair_id": pair_ids[(pair.id_a, pair.id_b)],
            "state": pair.block_key,
            "xi": f"{pair.xi:.6f}",
            "pattern": " ".join(str(v) for v in pair.pattern),
        }
        for prefix, rec in (("a", ra), ("b", rb)):
            for name in MERGE_FIELDS:
                value = getattr(rec, name)
                if name == "event_date":
                    value = value.isoformat() if value else ""
                row[f"{prefix}_{name}"] = "" if value is None else value
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# Full pipeline.
# ---------------------------------------------------------------------------

@dataclass
class PipelineResult:
    config: LinkageConfig
    out_dir: Path
    block_scores: dict[str, BlockScore]
    pooled_params: ModelParams
    retained: list[ScoredPair]
    declared: list[ScoredPair]
    matched: list[ScoredPair]
    merged_rows: list[dict]
    review_rows: list[dict]
    fdr: float
    fnr: float
    report: dict
    timings: dict[str, float]


def _score_block_task(args) -> tuple[str, BlockScore, Optional[list[ScoredPair]]]:
    block, fields, em_tol, em_max_iter, min_block_size, retain_floor = args
    if block.min_side >= min_block_size:
        score, pairs = link_block(block, fields, retain_floor=retain_floor,
                                  em_tol=em_tol, em_max_iter=em_max_iter)
        return block.key, score, pairs
    counts = block_pattern_counts(block, fields)
    placeholder = BlockScore(block.key, counts, None, None, True)
    return block.key, placeholder, None


def ingest_datasets(config: LinkageConfig, out_dir) -> dict:
    """Ingest and filter both datasets, writing reject and filter side files.

    Returns a dict keyed by source letter with the dataset config, raw
    records, rejects, kept records, and filtered-out (record, reason) pairs.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sides = {}
    for source, ds in ((SOURCE_A, config.dataset_a), (SOURCE_B, config.dataset_b)):
        try:
            records, rejects = load_csv(ds.path, ds.mapping, source=source,
                                        epoch=config.epoch)
        except SchemaError as exc:
            raise PipelineError("ingest", str(exc)) from exc
        kept, filtered = _apply_filters(records, ds, config)
        sides[source] = {
            "dataset": ds, "records": records, "rejects": rejects,
            "kept": kept, "filtered": filtered,
        }
        suffix = source.lower()
        write_rejects_csv(out_dir / f"rejects_{suffix}.csv", rejects,
                          _original_header(ds.path))
        _write_filtered_csv(out_dir / f"filtered_{suffix}.csv", filtered)
    return sides


def run_pipeline(config: LinkageConfig, out_dir) -> PipelineResult:
    out_dir = Path(out_dir)
    timings: dict[str, float] = {}

    t0 = time.perf_counter()
    sides = ingest_datasets(config, out_dir)
    timings["ingest"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    blocks, blocking = block_by_state(sides[SOURCE_A]["kept"], sides[SOURCE_B]["kept"])
    if not blocks:
        raise PipelineError("link", "no block has records on both sides")
    timings["block"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    tasks = [(block, config.fields, config.em_tol, config.em_max_iter,
              config.min_block_size, config.retain_floor) for block in blocks]
    if config.jobs > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            outcomes = list(pool.map(_score_block_task, tasks))
    else:
        outcomes = [_score_block_task(task) for task in tasks]

    pooled_entries: dict[tuple[int, ...], int] = {}
    for _, score, _ in outcomes:
        for pattern, c in score.counts.entries.items():
            pooled_entries[pattern] = pooled_entries.get(pattern, 0) + c
    pooled_counts = PatternCounts(pooled_entries, sum(pooled_entries.values()))
    try:
        pooled_params, pooled_diag = em_fit(
            pooled_counts, list(config.levels),
            tol=config.em_tol, max_iter=config.em_max_iter)
    except ValueError as exc:
        raise PipelineError("link", f"pooled fit failed: {exc}") from exc

    blocks_by_key = {block.key: block for block in blocks}
    block_scores: dict[str, BlockScore] = {}
    retained: list[ScoredPair] = []
    for key, score, pairs in outcomes:
        if pairs is None:
            score, pairs = link_block(blocks_by_key[key], config.fields,
                                      params=pooled_params,
                                      retain_floor=config.retain_floor)
        block_scores[key] = score
        retained.extend(pairs)
    timings["score"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    retained.sort(key=lambda p: (p.block_key, p.id_a, p.id_b))
    pair_ids = {(p.id_a, p.id_b): f"P{i + 1:06d}" for i, p in enumerate(retained)}
    declared = declare_matches(retained, config.threshold)
    matched = resolve_one_to_one(declared)

    records_a = {r.record_id: r for r in sides[SOURCE_A]["kept"]}
    records_b = {r.record_id: r for r in sides[SOURCE_B]["kept"]}
    merged_rows = merge_linked(matched, records_a, records_b, pair_ids)
    ambiguous = [p for p in retained if config.retain_floor <= p.xi < config.threshold]
    review_rows = merge_linked(ambiguous, records_a, records_b, pair_ids)

    fp_mass = declared_n = undeclared_xi = total_xi = 0.0
    for score in block_scores.values():
        terms = error_rate_terms(score.counts, score.params, config.threshold)
        fp_mass += terms[0]
        declared_n += terms[1]
        undeclared_xi += terms[2]
        total_xi += terms[3]
    fdr = fp_mass / declared_n if declared_n else 0.0
    fnr = undeclared_xi / total_xi if total_xi > 0 else 0.0
    timings["resolve"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    _write_rows_csv(out_dir / "merged.csv", merged_rows)
    _write_rows_csv(out_dir / "review_queue.csv", review_rows)
    _write_params(out_dir, block_scores, pooled_params, config.field_names)
    report = _build_report(config, sides, blocks, blocking, block_scores,
                           pooled_params, pooled_diag, retained, declared,
                           matched, review_rows, fdr, fnr)
    with open(out_dir / "report.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump(report, fh, sort_keys=False)
    timings["write"] = time.perf_counter() - t0
    with open(out_dir / "timings.yaml", "w", encoding="utf-8") as fh:
        yaml.safe_dump({k: round(v, 6) for k, v in timings.items()}, fh, sort_keys=False)

    return PipelineResult(
        config=config, out_dir=out_dir, block_scores=block_scores,
        pooled_params=pooled_params, retained=retained, declared=declared,
        matched=matched, merged_rows=merged_rows, review_rows=review_rows,
        fdr=fdr, fnr=fnr, report=report, timings=timings,
    )


def _apply_filters(records, ds, config) -> tuple[list[CanonicalRecord], list[tuple]]:
    kept = []
    filtered = []
    for rec in records:
        if ds.apply_scope_filter:
            ok, reason = filter_scope(rec, config.rules)
            if not ok:
                filtered.append((rec, reason))
                continue
        if ds.apply_eligibility_filter:
            year = rec.event_date.year if rec.event_date else None
            ok, reason = filter_eligibility(rec, year, config.rules)
            if not ok:
                filtered.append((rec, reason))
                continue
        kept.append(rec)
    return kept, filtered


def _original_header(path) -> list[str]:
    with open(path, "r", encoding="utf-8-sig", newline="") as fh:
        return next(csv.reader(fh))


def _write_filtered_csv(path, filtered) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["record_id", "state", "event_date", "filter_reason"])
        for rec, reason in filtered:
            writer.writerow([rec.record_id, rec.state,
                             rec.event_date.isoformat() if rec.event_date else "", reason])


def _write_rows_csv(path, rows) -> None:
    header = ["pair_id", "state", "xi", "pattern"]
    header += [f"{p}_{name}" for p in ("a", "b") for name in MERGE_FIELDS]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=header)
        writer.writeheader()
        writer.writerows(rows)


def _write_params(out_dir, block_scores, pooled_params, names) -> None:
    params_dir = out_dir / "params"
    params_dir.mkdir(exist_ok=True)
    with open(params_dir / "pooled.txt", "w", encoding="utf-8") as fh:
        fh.write(pooled_params.to_text(names=names))
    for key in sorted(block_scores):
        score = block_scores[key]
        if score.pooled:
            continue
        with open(params_dir / f"block_{key}.txt", "w", encoding="utf-8") as fh:
            fh.write(score.params.to_text(names=names))


def _build_report(config, sides, blocks, blocking, block_scores, pooled_params,
                  pooled_diag, retained, declared, matched, review_rows,
                  fdr, fnr) -> dict:
    datasets = {}
    for source, side in sides.items():
        reasons: dict[str, int] = {}
        for _, reason in side["filtered"]:
            reasons[reason] = reasons.get(reason, 0) + 1
        datasets[side["dataset"].name] = {
            "path": str(side["dataset"].path),
            "rows_read": len(side["records"]) + len(side["rejects"]),
            "records": len(side["records"]),
            "rejects": len(side["rejects"]),
            "filtered": {k: reasons[k] for k in sorted(reasons)},
            "kept": len(side["kept"]),
        }
    per_block = {}
    for block in blocks:
        score = block_scores[block.key]
        entry = {
            "records_a": len(block.records_a),
            "records_b": len(block.records_b),
            "pairs": block.n_pairs,
            "pooled": score.pooled,
        }
        if score.diagnostics is not None:
            entry["lambda"] = float(score.params.lam)
            entry["em_iterations"] = score.diagnostics.iterations
            entry["em_converged"] = score.diagnostics.converged
        per_block[block.key] = entry
    return {
        "threshold": config.threshold,
        "retain_floor": config.retain_floor,
        "fields": list(config.field_names),
        "datasets": datasets,
        "blocking": {
            "blocks": len(blocks),
            "orphan_keys_a": list(blocking.orphan_keys_a),
            "orphan_keys_b": list(blocking.orphan_keys_b),
            "orphan_records_a": blocking.orphan_records_a,
            "orphan_records_b": blocking.orphan_records_b,
        },
        "pairs": {
            "compared": sum(b.n_pairs for b in blocks),
            "retained": len(retained),
            "declared": len(declared),
            "matched_one_to_one": len(matched),
            "review_queue": len(review_rows),
        },
        "model": {
            "pooled_lambda": float(pooled_params.lam),
            "pooled_em_iterations": pooled_diag.iterations,
            "pooled_em_converged": pooled_diag.converged,
            "blocks": per_block,
        },
        "error_estimates": {"fdr": fdr, "fnr": fnr},
    }
