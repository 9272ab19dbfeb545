"""Two-class latent mixture over agreement patterns.

A candidate pair's agreement pattern is assumed to be drawn from one of two
latent classes (match / non-match), each with independent per-field level
distributions. Fitting is plain EM over the compressed pattern counts; fields
marked MISSING in a pattern are marginalized out (missing-at-random), so they
contribute a factor of one to either class likelihood. The posterior match
probability of a pair follows by Bayes' rule from the class prior and the two
pattern likelihoods.

Everything is deterministic: no randomized initialization, so a fit is
reproducible bit-for-bit from the same counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .comparators import MISSING

MATCH = "M"
NONMATCH = "U"

PROB_FLOOR = 1e-12
DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 5000

Pattern = tuple[int, ...]


@dataclass(frozen=True)
class PatternCounts:
    """Multiset of agreement patterns; the sufficient statistic for fitting."""

    entries: dict[Pattern, int]
    total_pairs: int

    def __post_init__(self):
        if sum(self.entries.values()) != self.total_pairs:
            raise ValueError("pattern counts do not sum to total_pairs")


def count_patterns(patterns: Iterable[Pattern]) -> PatternCounts:
    """Single-pass exact multiset counts; mixed pattern lengths are a bug."""
    entries: dict[Pattern, int] = {}
    width = None
    total = 0
    for pattern in patterns:
        if width is None:
            width = len(pattern)
        elif len(pattern) != width:
            raise ValueError(f"mixed pattern lengths: {len(pattern)} vs {width}")
        entries[pattern] = entries.get(pattern, 0) + 1
        total += 1
    return PatternCounts(entries, total)


@dataclass(frozen=True)
class ModelParams:
    """Class prior and per-field level distributions for both classes."""

    lam: float
    pi_m: tuple[np.ndarray, ...]
    pi_u: tuple[np.ndarray, ...]

    def __post_init__(self):
        if not 0.0 < self.lam < 1.0:
            raise ValueError(f"lambda must lie strictly in (0,1), got {self.lam}")
        if len(self.pi_m) != len(self.pi_u):
            raise ValueError("pi_m and pi_u must cover the same fields")
        for name, dists in (("pi_m", self.pi_m), ("pi_u", self.pi_u)):
            for k, dist in enumerate(dists):
                if np.any(dist < 0.0) or np.any(dist > 1.0):
                    raise ValueError(f"{name}[{k}] has entries outside [0,1]")
                if abs(float(dist.sum()) - 1.0) > 1e-9:
                    raise ValueError(f"{name}[{k}] does not sum to 1")

    @property
    def levels(self) -> tuple[int, ...]:
        return tuple(len(d) for d in self.pi_m)

    @property
    def n_fields(self) -> int:
        return len(self.pi_m)

    def to_text(self, names: Optional[Sequence[str]] = None) -> str:
        """Key-value serialization for audit and re-scoring."""
        if names is None:
            names = [f"f{k}" for k in range(self.n_fields)]
        lines = [f"lambda = {self.lam!r}", f"fields = {' '.join(names)}"]
        for name, m, u in zip(names, self.pi_m, self.pi_u):
            lines.append(f"m {name} = " + " ".join(repr(float(v)) for v in m))
            lines.append(f"u {name} = " + " ".join(repr(float(v)) for v in u))
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> tuple["ModelParams", list[str]]:
        values: dict[str, str] = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, _, value = line.partition("=")
            values[key.strip()] = value.strip()
        try:
            lam = float(values.pop("lambda"))
            names = values.pop("fields").split()
            pi_m = tuple(np.array([float(v) for v in values[f"m {n}"].split()]) for n in names)
            pi_u = tuple(np.array([float(v) for v in values[f"u {n}"].split()]) for n in names)
        except KeyError as exc:
            raise ValueError(f"malformed model parameter file: missing {exc}") from exc
        return cls(lam, pi_m, pi_u), names


@dataclass(frozen=True)
class EMDiagnostics:
    iterations: int
    final_loglik: float
    converged: bool
    label_swapped: bool
    loglik_trace: tuple[float, ...] = field(repr=False, default=())


def pattern_likelihood(pattern: Pattern, params: ModelParams, cls: str) -> float:
    """Product over non-missing fields of the class level probabilities.

    MISSING fields contribute a factor of one, so an all-missing pattern has
    likelihood one under both classes.
    """
    dists = params.pi_m if cls == MATCH else params.pi_u
    if len(pattern) != params.n_fields:
        raise ValueError(f"pattern width {len(pattern)} != {params.n_fields} fields")
    out = 1.0
    for k, level in enumerate(pattern):
        if level == MISSING:
            continue
        if not 0 <= level < len(dists[k]):
            raise ValueError(f"level {level} out of range for field {k}")
        out *= float(dists[k][level])
    return out


def posterior(pattern: Pattern, params: ModelParams) -> float:
    """Bayes-rule posterior that the pair is a match given its pattern."""
    lm = pattern_likelihood(pattern, params, MATCH)
    lu = pattern_likelihood(pattern, params, NONMATCH)
    num = params.lam * lm
    return num / (num + (1.0 - params.lam) * lu)


def posterior_table(patterns: Sequence[Pattern], params: ModelParams) -> np.ndarray:
    """Vectorized posteriors for a batch of patterns."""
    log_lm, log_lu = _class_logliks(_pattern_matrix(patterns), params.pi_m, params.pi_u)
    return _expit(np.log(params.lam) + log_lm - np.log1p(-params.lam) - log_lu)


def default_init(counts: PatternCounts, levels: Sequence[int]) -> ModelParams:
    """Deterministic starting point: lambda 0.1; match class puts 0.8 on the
    top level; non-match class starts at the observed marginal frequencies."""
    pi_m = []
    pi_u = []
    for k, n_levels in enumerate(levels):
        top = np.full(n_levels, 0.2 / (n_levels - 1))
        top[-1] = 0.8
        pi_m.append(top)
        marginal = np.zeros(n_levels)
        for pattern in sorted(counts.entries):
            if pattern[k] != MISSING:
                marginal[pattern[k]] += counts.entries[pattern]
        if marginal.sum() == 0:
            marginal[:] = 1.0
        pi_u.append(_clamp_normalize(marginal / marginal.sum()))
    return ModelParams(0.1, tuple(pi_m), tuple(pi_u))


def em_fit(counts: PatternCounts, levels: Sequence[int],
           init: Optional[ModelParams] = None, tol: float = DEFAULT_TOL,
           max_iter: int = DEFAULT_MAX_ITER) -> tuple[ModelParams, EMDiagnostics]:
    """Fit the mixture by EM on pattern counts.

    Stops when the largest absolute parameter change falls below tol or after
    max_iter iterations (returned with converged=False, not an exception).
    Every M-step clamps probabilities into [1e-12, 1-1e-12] so no likelihood
    degenerates to zero. If the fitted match class ends up with lower mean
    agreement than the non-match class, the classes are swapped before
    returning.
    """
    if not counts.entries:
        raise ValueError("cannot fit a model on empty pattern counts")
    # canonical pattern order makes the fit independent of insertion order
    patterns = sorted(counts.entries)
    c = np.array([counts.entries[p] for p in patterns], dtype=np.float64)
    n = c.sum()
    lvl = _pattern_matrix(patterns)
    if lvl.shape[1] != len(levels):
        raise ValueError(f"patterns have {lvl.shape[1]} fields, expected {len(levels)}")

    params = init if init is not None else default_init(counts, levels)
    lam = params.lam
    pi_m = [np.asarray(d, dtype=np.float64).copy() for d in params.pi_m]
    pi_u = [np.asarray(d, dtype=np.float64).copy() for d in params.pi_u]

    obs = lvl != MISSING
    idx = np.where(obs, lvl, 0)

    trace: list[float] = []
    converged = False
    iterations = 0
    for _ in range(max_iter):
        log_lm, log_lu = _class_logliks_arrays(idx, obs, pi_m, pi_u)
        log_m = np.log(lam) + log_lm
        log_u = np.log1p(-lam) + log_lu
        trace.append(float(np.dot(c, np.logaddexp(log_m, log_u))))
        xi = _expit(log_m - log_u)

        wm = c * xi
        wu = c - wm
        new_lam = float(np.clip(wm.sum() / n, PROB_FLOOR, 1.0 - PROB_FLOOR))
        delta = abs(new_lam - lam)
        lam = new_lam
        for k, n_levels in enumerate(levels):
            mask = obs[:, k]
            lv = idx[mask, k]
            num_m = np.bincount(lv, weights=wm[mask], minlength=n_levels)
            num_u = np.bincount(lv, weights=wu[mask], minlength=n_levels)
            if num_m.sum() > 0:
                new_m = _clamp_normalize(num_m / num_m.sum())
                delta = max(delta, float(np.abs(new_m - pi_m[k]).max()))
                pi_m[k] = new_m
            if num_u.sum() > 0:
                new_u = _clamp_normalize(num_u / num_u.sum())
                delta = max(delta, float(np.abs(new_u - pi_u[k]).max()))
                pi_u[k] = new_u
        iterations += 1
        if delta < tol:
            converged = True
            break

    log_lm, log_lu = _class_logliks_arrays(idx, obs, pi_m, pi_u)
    final_ll = float(np.dot(c, np.logaddexp(np.log(lam) + log_lm, np.log1p(-lam) + log_lu)))
    trace.append(final_ll)

    swapped = _mean_agreement(pi_m) < _mean_agreement(pi_u)
    if swapped:
        lam = 1.0 - lam
        pi_m, pi_u = pi_u, pi_m
    fitted = ModelParams(lam, tuple(pi_m), tuple(pi_u))
    return fitted, EMDiagnostics(iterations, final_ll, converged, swapped, tuple(trace))


def observed_loglik(counts: PatternCounts, params: ModelParams) -> float:
    """Observed-data log-likelihood of the counts under the parameters."""
    patterns = sorted(counts.entries)
    c = np.array([counts.entries[p] for p in patterns], dtype=np.float64)
    log_lm, log_lu = _class_logliks(_pattern_matrix(patterns), params.pi_m, params.pi_u)
    return float(np.dot(c, np.logaddexp(np.log(params.lam) + log_lm,
                                        np.log1p(-params.lam) + log_lu)))


def estimate_error_rates(posteriors: Iterable[tuple[float, bool]]) -> tuple[float, float]:
    """(FDR, FNR) estimates from posteriors and declaration flags.

    FDR is the mean of 1-xi over declared pairs (0 when nothing is declared);
    FNR is the posterior mass left undeclared as a share of all posterior
    mass (0 when that mass is 0).
    """
    declared_sum = 0.0
    declared_n = 0
    total_xi = 0.0
    undeclared_xi = 0.0
    for xi, declared in posteriors:
        total_xi += xi
        if declared:
            declared_sum += 1.0 - xi
            declared_n += 1
        else:
            undeclared_xi += xi
    fdr = declared_sum / declared_n if declared_n else 0.0
    fnr = undeclared_xi / total_xi if total_xi > 0 else 0.0
    return fdr, fnr


def _pattern_matrix(patterns: Sequence[Pattern]) -> np.ndarray:
    return np.array(patterns, dtype=np.int64).reshape(len(patterns), -1)


def _class_logliks(lvl: np.ndarray, pi_m, pi_u) -> tuple[np.ndarray, np.ndarray]:
    obs = lvl != MISSING
    idx = np.where(obs, lvl, 0)
    return _class_logliks_arrays(idx, obs, pi_m, pi_u)


def _class_logliks_arrays(idx, obs, pi_m, pi_u) -> tuple[np.ndarray, np.ndarray]:
    log_lm = np.zeros(idx.shape[0])
    log_lu = np.zeros(idx.shape[0])
    for k in range(idx.shape[1]):
        mask = obs[:, k]
        log_lm[mask] += np.log(pi_m[k][idx[mask, k]])
        log_lu[mask] += np.log(pi_u[k][idx[mask, k]])
    return log_lm, log_lu


def _expit(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z, dtype=np.float64)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _clamp_normalize(dist: np.ndarray) -> np.ndarray:
    clamped = np.clip(dist, PROB_FLOOR, 1.0 - PROB_FLOOR)
    return clamped / clamped.sum()


def _mean_agreement(dists: Sequence[np.ndarray]) -> float:
    """Expected level, normalized per field to [0,1], averaged across fields."""
    acc = 0.0
    for dist in dists:
        top = len(dist) - 1
        acc += float(np.dot(dist, np.arange(len(dist)))) / top if top else 0.0
    return acc / len(dists)
