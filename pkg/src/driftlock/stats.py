"""Measurement and statistical machinery over run records.

All aggregations are pure functions of immutable record lists. The
signed-rank test is implemented here rather than borrowed: the exact
path must handle tied average ranks by direct enumeration of the
sign-flip null (scipy's exact mode refuses ties), and the approximate
path needs the tie-corrected variance with continuity correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.special import stdtr

from .core import RunRecord, fresh_rng
from .errors import ContractViolationError, DegenerateSampleError, EmptyPairingError

EXACT_MAX_N = 25


# ------------------------------------------------------------- basic rates

def success_rate(records: Sequence[RunRecord]) -> float:
    if not records:
        raise ContractViolationError("success_rate over an empty record set")
    return sum(r.success for r in records) / len(records)


def censored_mean(records: Sequence[RunRecord], ceiling: int) -> float:
    """Mean iterations with failures charged the budget ceiling."""
    for r in records:
        if r.iteration_budget != ceiling:
            raise ContractViolationError(
                f"record budget {r.iteration_budget} != ceiling {ceiling}; budgets must not mix"
            )
    values = [r.iterations_used if r.success else ceiling for r in records]
    return float(np.mean(values))


def censored_values(records: Sequence[RunRecord], ceiling: int) -> np.ndarray:
    return np.array([r.iterations_used if r.success else ceiling for r in records], dtype=float)


def pair_records(
    records_a: Sequence[RunRecord], records_b: Sequence[RunRecord]
) -> tuple[list[tuple[RunRecord, RunRecord]], list[tuple]]:
    """Match records across modes on (classifier, attack, image, seed).

    Returns (pairs, unmatched_keys); callers decide whether unmatched keys
    are an error or a report row.
    """

    def pkey(r: RunRecord):
        return (r.classifier_id, r.attack_id, r.image_id, r.seed)

    index_b = {pkey(r): r for r in records_b}
    pairs, missing = [], []
    seen = set()
    for ra in records_a:
        k = pkey(ra)
        rb = index_b.get(k)
        if rb is None:
            missing.append(k)
        else:
            pairs.append((ra, rb))
            seen.add(k)
    missing.extend(k for k in index_b if k not in seen)
    return pairs, missing


def paired_mean(
    records_a: Sequence[RunRecord], records_b: Sequence[RunRecord]
) -> tuple[float, float, int]:
    """Mean iterations over the both-success intersection only."""
    pairs, _ = pair_records(records_a, records_b)
    both = [(ra, rb) for ra, rb in pairs if ra.success and rb.success]
    if not both:
        raise EmptyPairingError("no image succeeded under both modes")
    mean_a = float(np.mean([ra.iterations_used for ra, _ in both]))
    mean_b = float(np.mean([rb.iterations_used for _, rb in both]))
    return mean_a, mean_b, len(both)


def success_cdf(records: Sequence[RunRecord], grid: Sequence[float]) -> list[float]:
    """Success rate at each iteration threshold; monotone non-decreasing."""
    if list(grid) != sorted(grid):
        raise ContractViolationError("grid must be ascending")
    n = len(records)
    if n == 0:
        raise ContractViolationError("success_cdf over an empty record set")
    iters = np.array([r.iterations_used if r.success else np.inf for r in records])
    return [float(np.sum(iters <= t) / n) for t in grid]


# ------------------------------------------------------------- wilcoxon

@dataclass
class PairedSample:
    """Per-image paired values for two modes on identical (image, seed)."""

    keys: list
    values_a: np.ndarray
    values_b: np.ndarray

    @classmethod
    def from_records(cls, records_a, records_b, ceiling: Optional[int] = None):
        pairs, missing = pair_records(records_a, records_b)
        if missing:
            raise ContractViolationError(f"unpaired keys: {missing[:3]}{'...' if len(missing) > 3 else ''}")
        keys = [(ra.classifier_id, ra.attack_id, ra.image_id, ra.seed) for ra, _ in pairs]
        if ceiling is None:
            va = np.array([ra.iterations_used for ra, _ in pairs], dtype=float)
            vb = np.array([rb.iterations_used for _, rb in pairs], dtype=float)
        else:
            va = np.array(
                [ra.iterations_used if ra.success else ceiling for ra, _ in pairs], dtype=float
            )
            vb = np.array(
                [rb.iterations_used if rb.success else ceiling for _, rb in pairs], dtype=float
            )
        return cls(keys, va, vb)

    @property
    def differences(self) -> np.ndarray:
        return self.values_a - self.values_b


@dataclass
class WilcoxonResult:
    statistic: float  # W+: sum of ranks of positive differences
    p_value: float
    n_used: int
    method: str  # "exact" | "normal" | "degenerate"
    degenerate: bool = False


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks (1-based) of |values| with ties sharing the average rank."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values), dtype=float)
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_two_sided(ranks: np.ndarray, w_plus: float) -> float:
    """P(|W+ - mu| >= |w - mu|) under the sign-flip null, by DP over the
    distribution of W+. Ranks may be half-integers (ties), so everything
    is scaled by 2 to stay integral."""
    scaled = np.rint(ranks * 2).astype(int)
    total = int(scaled.sum())
    poly = np.zeros(total + 1)
    poly[0] = 1.0
    for r in scaled:
        nxt = poly.copy()
        nxt[r:] += poly[: total + 1 - r]
        poly = nxt
    w2 = int(round(w_plus * 2))
    mu2 = total / 2.0
    dev = abs(w2 - mu2)
    support = np.arange(total + 1)
    mass = poly[np.abs(support - mu2) >= dev - 1e-9].sum()
    return float(mass / poly.sum())


def wilcoxon_signed_rank(
    pairs, *, zero_method: str = "discard", exact_max_n: int = EXACT_MAX_N
) -> WilcoxonResult:
    """Two-sided signed-rank test.

    `pairs` is a PairedSample, a (values_a, values_b) tuple, or a raw
    difference array. Zero differences are discarded by default
    ("discard"); "pratt" ranks them first and drops only their rank mass.
    Exact enumeration up to `exact_max_n` non-zero differences, normal
    approximation with tie-corrected variance and continuity correction
    beyond. An all-zero sample is degenerate: p = 1, flagged.
    """
    if isinstance(pairs, PairedSample):
        diffs = pairs.differences
    elif isinstance(pairs, tuple) and len(pairs) == 2:
        diffs = np.asarray(pairs[0], dtype=float) - np.asarray(pairs[1], dtype=float)
    else:
        diffs = np.asarray(pairs, dtype=float)
    if zero_method not in ("discard", "pratt"):
        raise ContractViolationError(f"unknown zero_method {zero_method!r}")

    nonzero = diffs[diffs != 0.0]
    if len(nonzero) == 0:
        return WilcoxonResult(0.0, 1.0, 0, "degenerate", degenerate=True)

    if zero_method == "discard":
        ranked_abs = np.abs(nonzero)
        ranks = _average_ranks(ranked_abs)
        signs = nonzero > 0
    else:  # pratt: rank |d| including zeros, keep only non-zero ranks
        all_ranks = _average_ranks(np.abs(diffs))
        keep = diffs != 0.0
        ranks = all_ranks[keep]
        signs = diffs[keep] > 0
    n = len(ranks)
    w_plus = float(ranks[signs].sum())

    if n <= exact_max_n:
        p = _exact_two_sided(ranks, w_plus)
        return WilcoxonResult(w_plus, min(1.0, p), n, "exact")

    mu = ranks.sum() / 2.0
    # sum(r^2)/4 equals the textbook tie-corrected variance for average ranks
    var = float(np.sum(ranks**2)) / 4.0
    dev = abs(w_plus - mu)
    z = max(dev - 0.5, 0.0) / math.sqrt(var)
    p = math.erfc(z / math.sqrt(2.0))
    return WilcoxonResult(w_plus, min(1.0, p), n, "normal")


def bonferroni(p_values: Sequence[float]) -> list[float]:
    m = len(p_values)
    for p in p_values:
        if not (0.0 <= p <= 1.0):
            raise ContractViolationError(f"p-value {p} outside [0, 1]")
    return [min(1.0, m * p) for p in p_values]


# ------------------------------------------------------------- resampling

def bootstrap_ci(
    values: Sequence[float], level: float = 0.95, resamples: int = 2000, seed: int = 0
) -> tuple[float, float]:
    """Percentile bootstrap interval for the mean; deterministic per seed."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        raise ContractViolationError("bootstrap over an empty sample")
    if not (0.0 < level < 1.0):
        raise ContractViolationError("level must be in (0, 1)")
    rng = fresh_rng(seed, "bootstrap")
    idx = rng.integers(0, len(values), size=(resamples, len(values)))
    means = values[idx].mean(axis=1)
    alpha = 1.0 - level
    lo, hi = np.quantile(means, [alpha / 2.0, 1.0 - alpha / 2.0])
    return float(lo), float(hi)


def pearson_r(xs: Sequence[float], ys: Sequence[float]) -> tuple[float, float]:
    """Sample correlation with a t-distribution p-value (n-2 dof)."""
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    n = len(xs)
    if n < 3 or len(ys) != n:
        raise ContractViolationError("pearson_r needs n >= 3 matched samples")
    sx = xs.std()
    sy = ys.std()
    if sx == 0.0 or sy == 0.0:
        raise DegenerateSampleError("zero variance in pearson_r input")
    r = float(np.mean((xs - xs.mean()) * (ys - ys.mean())) / (sx * sy))
    r = max(-1.0, min(1.0, r))
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    p = 2.0 * float(stdtr(n - 2, -abs(t)))
    return r, p


# ------------------------------------------------------------- traces

@dataclass
class AlignmentTrace:
    cosines: np.ndarray
    horizon: int


def alignment_trace(
    snapshots: Sequence[np.ndarray],
    x_orig: np.ndarray,
    delta_oracle: np.ndarray,
    horizon: int,
) -> AlignmentTrace:
    """Cosine between each iteration's perturbation and the oracle
    direction; zero perturbations contribute 0 by convention."""
    ref = np.asarray(delta_oracle, dtype=float).reshape(-1)
    norm = np.linalg.norm(ref)
    if norm == 0.0:
        raise ContractViolationError("oracle direction must be nonzero")
    ref = ref / norm
    cosines = []
    for snap in snapshots[:horizon]:
        delta = (np.asarray(snap, dtype=float) - x_orig).reshape(-1)
        d = np.linalg.norm(delta)
        cosines.append(0.0 if d == 0.0 else float(delta @ ref / d))
    return AlignmentTrace(np.asarray(cosines), horizon)


def pad_to_horizon(cosines: Sequence[float], horizon: int) -> np.ndarray:
    """Carry a terminated run's last cosine forward to the horizon."""
    arr = list(cosines)
    if not arr:
        arr = [0.0]
    while len(arr) < horizon:
        arr.append(arr[-1])
    return np.asarray(arr[:horizon])


def aggregate_alignment(traces: Sequence[Sequence[float]], horizon: int):
    """Per-iteration mean and std across images (runs padded to horizon)."""
    mat = np.stack([pad_to_horizon(t, horizon) for t in traces])
    return mat.mean(axis=0), mat.std(axis=0)


# ------------------------------------------------------------- lock metrics

@dataclass
class LockMatch:
    matched: int
    locked: int
    unlocked: int

    @property
    def rate(self) -> float:
        return self.matched / self.locked if self.locked else 0.0


def lock_match_rate(records: Sequence[RunRecord]) -> LockMatch:
    """Fraction of locked runs whose locked class equals the oracle class.
    Unlocked runs are excluded from the denominator and counted apart."""
    locked = [r for r in records if r.locked_class is not None]
    unlocked = len(records) - len(locked)
    matched = sum(
        1 for r in locked if r.oracle_class is not None and r.locked_class == r.oracle_class
    )
    return LockMatch(matched, len(locked), unlocked)


def target_overlap(
    records: Sequence[RunRecord],
    clean_rankings: dict[str, Sequence[int]],
    k_tops: Sequence[int],
) -> dict[int, float]:
    """Fraction of locked runs whose locked class lies in the clean-image
    top-K non-true list, per K. Non-decreasing in K."""
    locked = [r for r in records if r.locked_class is not None]
    out = {}
    for k_top in k_tops:
        if locked:
            hits = sum(
                1
                for r in locked
                if r.locked_class in list(clean_rankings[r.image_id])[:k_top]
            )
            out[int(k_top)] = hits / len(locked)
        else:
            out[int(k_top)] = 0.0
    return out


# ------------------------------------------------------------- difficulty

@dataclass
class DifficultyHistogram:
    bin_edges: np.ndarray
    counts: np.ndarray
    medium_zone: tuple[float, float]
    medium_mass: float


def difficulty_histogram(
    records: Sequence[RunRecord],
    bins: Sequence[float],
    medium_zone: tuple[float, float] = (100.0, 1500.0),
) -> DifficultyHistogram:
    """Iteration histogram with failures in the ceiling bin, plus the mass
    inside the configured medium-difficulty zone."""
    if list(bins) != sorted(bins):
        raise ContractViolationError("bins must be ascending")
    ceilings = {r.iteration_budget for r in records}
    if len(ceilings) > 1:
        raise ContractViolationError("difficulty_histogram must not mix budgets")
    values = np.array(
        [r.iterations_used if r.success else r.iteration_budget for r in records], dtype=float
    )
    counts, edges = np.histogram(values, bins=np.asarray(bins, dtype=float))
    lo, hi = medium_zone
    mass = float(np.mean((values >= lo) & (values <= hi))) if len(values) else 0.0
    return DifficultyHistogram(edges, counts, medium_zone, mass)
