"""Per-field similarity scoring and agreement-level discretization.

Each configured field compares to a small integer agreement level; a candidate
pair's levels across all fields form its agreement pattern. Levels are ordered
worst-to-best (0 = disagree). A field where either side is absent gets the
MISSING marker instead of a level.

All functions here are pure; the matrix helpers at the bottom are the
vectorized path used when scoring whole blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

MISSING = -1

STRING_JW = "string_jw"
NUMERIC = "numeric"

DEFAULT_CUTOFFS = (0.92, 0.88)
DEFAULT_PREFIX_WEIGHT = 0.1
DEFAULT_MAX_PREFIX = 4


@dataclass(frozen=True)
class FieldConfig:
    """How one canonical field is compared.

    string_jw fields discretize a Jaro-Winkler score against descending
    cutoffs (len(cutoffs)+1 levels); numeric fields agree iff the absolute
    difference is within tolerance (2 levels).
    """

    field: str
    kind: str
    cutoffs: tuple[float, ...] = DEFAULT_CUTOFFS
    tolerance: float = 0.0

    def __post_init__(self):
        if self.kind not in (STRING_JW, NUMERIC):
            raise ValueError(f"unknown comparator kind {self.kind!r} for field {self.field!r}")
        if self.kind == STRING_JW:
            cuts = tuple(float(c) for c in self.cutoffs)
            if not cuts:
                raise ValueError(f"field {self.field!r}: string_jw needs at least one cutoff")
            if any(not 0.0 < c < 1.0 for c in cuts):
                raise ValueError(f"field {self.field!r}: cutoffs must lie strictly in (0,1)")
            if any(a <= b for a, b in zip(cuts, cuts[1:])):
                raise ValueError(f"field {self.field!r}: cutoffs must be strictly descending")
            object.__setattr__(self, "cutoffs", cuts)
        if self.tolerance < 0:
            raise ValueError(f"field {self.field!r}: tolerance must be >= 0")

    @property
    def levels(self) -> int:
        return len(self.cutoffs) + 1 if self.kind == STRING_JW else 2

    @property
    def top_level(self) -> int:
        return self.levels - 1


def jaro(s1: str, s2: str) -> float:
    """Jaro similarity in [0, 1].

    Match window is floor(max(|s1|,|s2|)/2) - 1 (never negative); the
    transposition count t is half the number of matched characters that
    disagree when both matched sequences are read in order.
    """
    if s1 == s2:
        return 1.0 if s1 else 0.0
    len1, len2 = len(s1), len(s2)
    if len1 == 0 or len2 == 0:
        return 0.0
    window = max(len1, len2) // 2 - 1
    if window < 0:
        window = 0
    matched2 = [False] * len2
    # matched characters of s1 in order; s2's are recovered from flags
    m1: list[str] = []
    for i, ch in enumerate(s1):
        lo = i - window
        if lo < 0:
            lo = 0
        hi = i + window + 1
        if hi > len2:
            hi = len2
        for j in range(lo, hi):
            if not matched2[j] and s2[j] == ch:
                matched2[j] = True
                m1.append(ch)
                break
    m = len(m1)
    if m == 0:
        return 0.0
    half_transpositions = 0
    k = 0
    for j in range(len2):
        if matched2[j]:
            if s2[j] != m1[k]:
                half_transpositions += 1
            k += 1
    t = half_transpositions / 2.0
    return (m / len1 + m / len2 + (m - t) / m) / 3.0


def jaro_winkler(s1: str, s2: str, prefix_weight: float = DEFAULT_PREFIX_WEIGHT,
                 max_prefix: int = DEFAULT_MAX_PREFIX) -> float:
    """Jaro score boosted by the common prefix: j + l * p * (1 - j)."""
    j = jaro(s1, s2)
    ell = 0
    limit = min(len(s1), len(s2), max_prefix)
    while ell < limit and s1[ell] == s2[ell]:
        ell += 1
    return j + ell * prefix_weight * (1.0 - j)


def discretize_string(sim: float, cutoffs: Sequence[float]) -> int:
    """Map a similarity to a level: top level for sim >= cutoffs[0], down to 0."""
    n = len(cutoffs)
    for i, cut in enumerate(cutoffs):
        if sim >= cut:
            return n - i
    return 0


def compare_numeric(a: float, b: float, tolerance: float) -> int:
    """1 iff |a - b| <= tolerance, else 0. Both values must be present."""
    return 1 if abs(a - b) <= tolerance else 0


def as_number(value) -> float:
    """Coerce a field value to a number for numeric comparison (zip codes
    arrive as digit strings)."""
    if isinstance(value, (int, float)):
        return float(value)
    try:
        return float(int(str(value)))
    except ValueError:
        return float(str(value))


def compare_field(va, vb, fc: FieldConfig) -> int:
    """Agreement level for one field of one pair; MISSING if either side absent."""
    if va is None or vb is None:
        return MISSING
    if fc.kind == STRING_JW:
        if va == "" or vb == "":
            return MISSING
        return discretize_string(jaro_winkler(va, vb), fc.cutoffs)
    return compare_numeric(as_number(va), as_number(vb), fc.tolerance)


def build_agreement_vector(ra, rb, config: Sequence[FieldConfig]) -> tuple[int, ...]:
    """Agreement pattern for a record pair under the configured fields."""
    if not config:
        raise ValueError("field configuration must be non-empty")
    return tuple(compare_field(getattr(ra, fc.field), getattr(rb, fc.field), fc)
                 for fc in config)


# ---------------------------------------------------------------------------
# Vectorized block scoring. Level matrices are int8 with MISSING = -1.
# ---------------------------------------------------------------------------

def numeric_level_matrix(values_a: Sequence, values_b: Sequence,
                         fc: FieldConfig) -> np.ndarray:
    """Pairwise numeric levels for all len(a) x len(b) pairs."""
    a = np.array([np.nan if v is None else as_number(v) for v in values_a], dtype=np.float64)
    b = np.array([np.nan if v is None else as_number(v) for v in values_b], dtype=np.float64)
    diff = np.abs(a[:, None] - b[None, :])
    levels = (diff <= fc.tolerance).astype(np.int8)
    levels[np.isnan(diff)] = MISSING
    return levels


def string_level_matrix(values_a: Sequence, values_b: Sequence,
                        fc: FieldConfig) -> np.ndarray:
    """Pairwise string levels; similarity is computed once per unique pair."""
    codes_a, uniques_a = _factorize(values_a)
    codes_b, uniques_b = _factorize(values_b)
    # slot 0 in the lookup table is reserved for missing on either side
    table = np.full((len(uniques_a) + 1, len(uniques_b) + 1), MISSING, dtype=np.int8)
    for i, ua in enumerate(uniques_a):
        row = table[i + 1]
        for j, ub in enumerate(uniques_b):
            row[j + 1] = discretize_string(jaro_winkler(ua, ub), fc.cutoffs)
    return table[np.ix_(codes_a, codes_b)]


def _factorize(values: Sequence) -> tuple[np.ndarray, list[str]]:
    """Integer codes for string values; 0 means missing, uniques start at 1."""
    index: dict[str, int] = {}
    codes = np.zeros(len(values), dtype=np.intp)
    uniques: list[str] = []
    for i, v in enumerate(values):
        if v is None or v == "":
            continue
        code = index.get(v)
        if code is None:
            code = len(uniques) + 1
            index[v] = code
            uniques.append(v)
        codes[i] = code
    return codes, uniques


def field_level_matrix(values_a: Sequence, values_b: Sequence,
                       fc: FieldConfig) -> np.ndarray:
    if fc.kind == STRING_JW:
        return string_level_matrix(values_a, values_b, fc)
    return numeric_level_matrix(values_a, values_b, fc)
