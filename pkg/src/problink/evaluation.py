"""Synthetic corpora with known truth, accuracy scoring, and review summaries.

The generator writes two CSVs with deliberately different column namings, a
truth table of planted links, and a ready-to-run pipeline config. All
randomness comes from one seeded stdlib generator, so a given spec always
produces byte-identical files.
"""

from __future__ import annotations

import csv
import random
import string
from dataclasses import dataclass
from datetime import date, timedelta
from pathlib import Path
from typing import Iterable, Optional, Sequence

import yaml

from .schema_ingest import DEFAULT_EPOCH, CanonicalRecord

DEFAULT_STATES = ("AZ", "CA", "CO", "GA", "IL", "MA", "NY", "OH")

_CITY_PREFIXES = (
    "SPRING", "GREEN", "FAIR", "OAK", "RIVER", "LAKE", "HILL", "MAPLE",
    "CEDAR", "WEST", "EAST", "NORTH", "SOUTH", "GRAND", "PLEASANT",
)
_CITY_SUFFIXES = (
    "FIELD", "VILLE", "TON", "WOOD", "DALE", "VIEW", "PORT", "BURG",
    "FORD", "HAVEN", "SIDE", "CREST",
)

HEADER_A = ("incident_id", "date", "state", "city_or_county", "zipcode", "n_killed")
HEADER_B = ("ID", "Event Date", "State", "City", "Zip", "Deaths")


@dataclass(frozen=True)
class SyntheticSpec:
    """Knobs for one synthetic corpus; defaults mirror the recovery scenario."""

    n_a: int = 1000
    n_b: int = 1000
    n_overlap: int = 600
    typo_rate: float = 0.1
    date_jitter: int = 1
    missing_rate: float = 0.05
    killed_jitter_rate: float = 0.05
    states: tuple[str, ...] = DEFAULT_STATES
    seed: int = 0
    day_span: int = 1826
    cities_per_state: int = 60
    zips_per_state: int = 40

    def __post_init__(self):
        if self.n_overlap > min(self.n_a, self.n_b):
            raise ValueError("n_overlap cannot exceed either side")
        if not self.states:
            raise ValueError("at least one state is required")
        for name in ("typo_rate", "missing_rate", "killed_jitter_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0,1], got {v}")


@dataclass(frozen=True)
class SyntheticPaths:
    directory: Path
    path_a: Path
    path_b: Path
    truth_path: Path
    config_path: Path


@dataclass(frozen=True)
class _Incident:
    state: str
    city: str
    zip: str
    days: int
    killed: int


def generate_synthetic(spec: SyntheticSpec, out_dir) -> SyntheticPaths:
    """Write a.csv, b.csv, truth.csv, and config.yaml under out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = random.Random(spec.seed)

    pools = {}
    all_cities = [p + s for p in _CITY_PREFIXES for s in _CITY_SUFFIXES]
    for state in spec.states:
        cities = rng.sample(all_cities, min(spec.cities_per_state, len(all_cities)))
        zips = [f"{rng.randrange(10000, 100000):05d}" for _ in range(spec.zips_per_state)]
        pools[state] = (cities, zips)

    def fresh() -> _Incident:
        state = rng.choice(spec.states)
        cities, zips = pools[state]
        return _Incident(
            state=state,
            city=rng.choice(cities),
            zip=rng.choice(zips),
            days=rng.randrange(spec.day_span),
            killed=rng.choices((0, 1, 2, 3, 4, 5), weights=(15, 55, 18, 7, 4, 1))[0],
        )

    incidents_a = [fresh() for _ in range(spec.n_a)]

    rows_b = []
    truth = []
    for i in range(spec.n_overlap):
        truth.append((f"A{i:05d}", f"B{i:05d}"))
        rows_b.append((f"B{i:05d}",) + _corrupt(incidents_a[i], rng, spec))
    for i in range(spec.n_overlap, spec.n_b):
        rows_b.append((f"B{i:05d}",) + _degrade(fresh(), rng, spec))
    rng.shuffle(rows_b)

    path_a = out_dir / "a.csv"
    with open(path_a, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER_A)
        for i, inc in enumerate(incidents_a):
            writer.writerow([f"A{i:05d}", _iso(inc.days), inc.state, inc.city,
                             inc.zip, inc.killed])

    path_b = out_dir / "b.csv"
    with open(path_b, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(HEADER_B)
        for record_id, state, city, zip_code, days, killed in rows_b:
            writer.writerow([record_id, _iso(days), state, city, zip_code, killed])

    truth_path = out_dir / "truth.csv"
    with open(truth_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["id_a", "id_b"])
        writer.writerows(truth)

    config_path = out_dir / "config.yaml"
    with open(config_path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(_pipeline_config(), fh, sort_keys=False)

    return SyntheticPaths(out_dir, path_a, path_b, truth_path, config_path)


def _corrupt(inc: _Incident, rng: random.Random, spec: SyntheticSpec) -> tuple:
    """B-side copy of an A incident with recording noise: a possible city
    typo, a uniform date jitter, an occasional off-by-one death count, and
    independent per-field missingness. Returns (state, city, zip, days, killed)."""
    city = inc.city
    if rng.random() < spec.typo_rate:
        city = _typo(city, rng)
    days = max(0, inc.days + rng.randint(-spec.date_jitter, spec.date_jitter))
    killed = inc.killed
    if rng.random() < spec.killed_jitter_rate:
        killed = max(0, killed + rng.choice((-1, 1)))
    zip_code = inc.zip
    if rng.random() < spec.missing_rate:
        city = ""
    if rng.random() < spec.missing_rate:
        zip_code = ""
    killed_out = "" if rng.random() < spec.missing_rate else killed
    return (inc.state, city, zip_code, days, killed_out)


def _degrade(inc: _Incident, rng: random.Random, spec: SyntheticSpec) -> tuple:
    """Fresh B-side incident with the same missingness profile."""
    city = "" if rng.random() < spec.missing_rate else inc.city
    zip_code = "" if rng.random() < spec.missing_rate else inc.zip
    killed = "" if rng.random() < spec.missing_rate else inc.killed
    return (inc.state, city, zip_code, inc.days, killed)


def _typo(city: str, rng: random.Random) -> str:
    ops = ["substitute"]
    if len(city) >= 2:
        ops += ["transpose", "delete"]
    op = rng.choice(ops)
    pos = rng.randrange(len(city))
    if op == "substitute":
        old = city[pos]
        new = rng.choice([c for c in string.ascii_uppercase if c != old])
        return city[:pos] + new + city[pos + 1:]
    if op == "transpose":
        pos = min(pos, len(city) - 2)
        return city[:pos] + city[pos + 1] + city[pos] + city[pos + 2:]
    return city[:pos] + city[pos + 1:]


def _iso(days: int) -> str:
    return (DEFAULT_EPOCH + timedelta(days=days)).isoformat()


def _pipeline_config() -> dict:
    return {
        "threshold": 0.85,
        "retain_floor": 0.5,
        "min_block_size": 10,
        "epoch": "2014-01-01",
        "fields": [
            {"field": "city", "kind": "string_jw", "cutoffs": [0.92, 0.88]},
            {"field": "days_since_start", "kind": "numeric", "tolerance": 1},
            {"field": "num_killed", "kind": "numeric"},
            {"field": "zip", "kind": "numeric"},
        ],
        "filters": {"eligibility": None},
        "dataset_a": {
            "name": "site_a",
            "path": "a.csv",
            "id_column": "incident_id",
            "date": {"column": "date"},
            "columns": {
                "state": "state",
                "city_or_county": "city",
                "zipcode": "zip",
                "n_killed": "num_killed",
            },
        },
        "dataset_b": {
            "name": "site_b",
            "path": "b.csv",
            "id_column": "ID",
            "date": {"column": "Event Date"},
            "columns": {
                "State": "state",
                "City": "city",
                "Zip": "zip",
                "Deaths": "num_killed",
            },
        },
    }


# ---------------------------------------------------------------------------
# Scoring against known truth.
# ---------------------------------------------------------------------------

def load_truth(path) -> frozenset[tuple[str, str]]:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return frozenset((row["id_a"], row["id_b"]) for row in csv.DictReader(fh))


@dataclass(frozen=True)
class LinkageScore:
    tp: int
    fp: int
    fn: int
    precision: Optional[float]
    recall: Optional[float]
    f1: Optional[float]

    def as_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn,
                "precision": self.precision, "recall": self.recall, "f1": self.f1}


def score_against_truth(pairs: Iterable[tuple[str, str]],
                        truth: frozenset[tuple[str, str]]) -> LinkageScore:
    """Pairwise precision, recall, and F1 against the planted links.

    Degenerate denominators yield None rather than a silent zero.
    """
    declared = set(pairs)
    tp = len(declared & truth)
    fp = len(declared) - tp
    fn = len(truth) - tp
    precision = tp / (tp + fp) if declared else None
    recall = tp / (tp + fn) if truth else None
    if precision is None or recall is None or (precision + recall) == 0:
        f1 = None
    else:
        f1 = 2 * precision * recall / (precision + recall)
    return LinkageScore(tp, fp, fn, precision, recall, f1)


def deterministic_baseline(records_a: Sequence[CanonicalRecord],
                           records_b: Sequence[CanonicalRecord],
                           fields: tuple[str, ...] = ("city", "zip", "event_date",
                                                      "num_killed")) -> list[tuple[str, str]]:
    """Naive exact join: all fields equal and present, within the same state.

    This is the comparison point a probabilistic linker must beat; any typo,
    date slip, or missing value on either side breaks the join.
    """
    index: dict[tuple, list[str]] = {}
    for rec in records_a:
        key = _exact_key(rec, fields)
        if key is not None:
            index.setdefault(key, []).append(rec.record_id)
    out = []
    for rec in records_b:
        key = _exact_key(rec, fields)
        if key is None:
            continue
        for id_a in index.get(key, ()):
            out.append((id_a, rec.record_id))
    return out


def _exact_key(rec: CanonicalRecord, fields: tuple[str, ...]) -> Optional[tuple]:
    values = [rec.state]
    for name in fields:
        value = getattr(rec, name)
        if value is None:
            return None
        values.append(value)
    return tuple(values)


# ---------------------------------------------------------------------------
# Adjudication summaries.
# ---------------------------------------------------------------------------

def truncated_percent(numerator: int, denominator: int, digits: int = 1) -> str:
    """Percent string truncated (not rounded) to the given digits.

    Integer arithmetic throughout, so 849/942 gives "90.12%" at two digits
    even though the exact value rounds up to 90.13.
    """
    if denominator <= 0:
        raise ValueError("denominator must be positive")
    scaled = numerator * 100 * 10 ** digits // denominator
    whole, frac = divmod(scaled, 10 ** digits)
    return f"{whole}.{frac:0{digits}d}%"


@dataclass(frozen=True)
class AdjudicationSummary:
    """Clerical review outcome counts over a sample of declared matches."""

    n_match: int
    n_nonmatch: int
    n_undetermined: int

    def __post_init__(self):
        for name in ("n_match", "n_nonmatch", "n_undetermined"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} cannot be negative")
        if self.total == 0:
            raise ValueError("at least one adjudicated pair is required")

    @property
    def total(self) -> int:
        return self.n_match + self.n_nonmatch + self.n_undetermined

    @property
    def review_precision(self) -> float:
        """Share of reviewed pairs confirmed as matches, out of all reviewed."""
        return self.n_match / self.total

    @property
    def review_precision_excluding_undetermined(self) -> Optional[float]:
        resolved = self.n_match + self.n_nonmatch
        return self.n_match / resolved if resolved else None


def sensitivity_report(counts: tuple[int, int, int]) -> dict:
    """Displayable review summary: proportions at four decimals (rounded) and
    percent strings truncated at one decimal, plus the review precision
    truncated at two."""
    summary = AdjudicationSummary(*counts)
    total = summary.total
    n = {"match": summary.n_match, "nonmatch": summary.n_nonmatch,
         "undetermined": summary.n_undetermined}
    report = {
        "counts": {**n, "total": total},
        "proportions": {k: round(v / total, 4) for k, v in n.items()},
        "percent": {k: truncated_percent(v, total, 1) for k, v in n.items()},
        "review_precision": summary.review_precision,
        "review_precision_display": truncated_percent(summary.n_match, total, 2),
    }
    excl = summary.review_precision_excluding_undetermined
    report["review_precision_excluding_undetermined"] = excl
    if excl is not None:
        report["review_precision_excluding_undetermined_display"] = truncated_percent(
            summary.n_match, summary.n_match + summary.n_nonmatch, 2)
    return report
