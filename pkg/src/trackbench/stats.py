"""Nonparametric comparison tests and the practical-difference rule.

Two trackers are compared per scope on paired per-frame accuracies (signed
rank test), on per-repetition failure counts (rank sum test), and on whether
their accuracy gap clears the annotation-noise floor.  Small samples use
exact enumeration of the null distribution; larger ones a tie-corrected
normal approximation with continuity correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Sequence

import numpy as np

from .errors import ContractError, ParameterError

__all__ = [
    "ComparisonResult",
    "accuracy_equivalent",
    "practical_difference",
    "rank_sum",
    "robustness_equivalent",
    "signed_rank",
]

SIGNED_RANK_EXACT_LIMIT = 20  # exact enumeration up to this many nonzero pairs
RANK_SUM_EXACT_LIMIT = 12  # exact enumeration up to this combined size


@dataclass(frozen=True)
class ComparisonResult:
    statistic: float
    p_value: float
    significant: bool
    method: str  # "exact" | "normal_approx"


def _check_alpha(alpha: float) -> None:
    if not (0.0 < alpha < 1.0):
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha!r}")


def _as_finite_array(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ContractError(f"{name} must be one-dimensional")
    if arr.size and not np.all(np.isfinite(arr)):
        raise ContractError(f"{name} contains non-finite values")
    return arr


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; tied values share the average of their positions."""
    order = np.argsort(values, kind="mergesort")
    ranks = np.empty(values.size, dtype=float)
    sv = values[order]
    i = 0
    n = values.size
    while i < n:
        j = i
        while j + 1 < n and sv[j + 1] == sv[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _tie_term(values: np.ndarray) -> float:
    """Sum of t^3 - t over tie groups."""
    _, counts = np.unique(values, return_counts=True)
    return float(np.sum(counts.astype(float) ** 3 - counts))


def _normal_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def _two_sided_from_tails(p_le: float, p_ge: float) -> float:
    return min(1.0, 2.0 * min(p_le, p_ge))


def signed_rank(differences: Sequence[float], alpha: float = 0.05,
                zero_policy: str = "drop") -> ComparisonResult:
    """Two-sided paired signed rank test on a vector of differences.

    Zero differences are dropped before ranking (``zero_policy="drop"``) or
    ranked along with the rest and then discarded from the statistic
    (``zero_policy="pratt"``).  All differences zero yields p = 1 rather
    than an error.  The statistic is the positive-rank sum.
    """
    _check_alpha(alpha)
    if zero_policy not in ("drop", "pratt"):
        raise ParameterError(f"unknown zero_policy {zero_policy!r}")
    d = _as_finite_array(differences, "differences")
    nonzero = d != 0.0
    if not np.any(nonzero):
        return ComparisonResult(0.0, 1.0, False, "exact")
    if zero_policy == "drop":
        d_used = d[nonzero]
        ranks = _average_ranks(np.abs(d_used))
    else:
        all_ranks = _average_ranks(np.abs(d))
        d_used = d[nonzero]
        ranks = all_ranks[nonzero]
    n = d_used.size
    w_pos = float(np.sum(ranks[d_used > 0]))

    if n <= SIGNED_RANK_EXACT_LIMIT:
        # Exact null distribution of the positive-rank sum over all 2^n sign
        # assignments of the observed ranks (ties therefore handled exactly).
        doubled = np.rint(ranks * 2.0).astype(np.int64)
        top = int(doubled.sum())
        counts = np.zeros(top + 1, dtype=np.float64)
        counts[0] = 1.0
        for r in doubled:
            shifted = np.zeros_like(counts)
            shifted[r:] = counts[: top + 1 - r]
            counts += shifted
        total = counts.sum()
        w2 = int(round(w_pos * 2.0))
        p_le = counts[: w2 + 1].sum() / total
        p_ge = counts[w2:].sum() / total
        p = _two_sided_from_tails(p_le, p_ge)
        return ComparisonResult(w_pos, p, p < alpha, "exact")

    mean = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0 - _tie_term(np.abs(d_used)) / 48.0
    if var <= 0:
        return ComparisonResult(w_pos, 1.0, False, "normal_approx")
    delta = w_pos - mean
    correction = 0.5 * math.copysign(1.0, delta) if delta != 0 else 0.0
    z = (delta - correction) / math.sqrt(var)
    p = min(1.0, 2.0 * _normal_sf(abs(z)))
    return ComparisonResult(w_pos, p, p < alpha, "normal_approx")


def rank_sum(a: Sequence[float], b: Sequence[float], alpha: float = 0.05) -> ComparisonResult:
    """Two-sided rank sum test on two independent samples.

    The statistic is the U count of the first sample.  Samples whose
    combined size is small are tested exactly by enumerating all group
    assignments of the observed (mid)ranks.
    """
    _check_alpha(alpha)
    xa = _as_finite_array(a, "a")
    xb = _as_finite_array(b, "b")
    n1, n2 = xa.size, xb.size
    if n1 == 0 or n2 == 0:
        raise ParameterError("both samples must be non-empty")
    combined = np.concatenate([xa, xb])
    ranks = _average_ranks(combined)
    r1 = float(ranks[:n1].sum())
    u = r1 - n1 * (n1 + 1) / 2.0
    n = n1 + n2

    if n <= RANK_SUM_EXACT_LIMIT:
        doubled = np.rint(ranks * 2.0).astype(np.int64)
        base = n1 * (n1 + 1)  # subtracted from doubled rank sums to get 2U
        u2_obs = int(round(2.0 * u))
        le = ge = total = 0
        for subset in combinations(range(n), n1):
            u2 = int(doubled[list(subset)].sum()) - base
            le += u2 <= u2_obs
            ge += u2 >= u2_obs
            total += 1
        p = _two_sided_from_tails(le / total, ge / total)
        return ComparisonResult(u, p, p < alpha, "exact")

    mean = n1 * n2 / 2.0
    tie = _tie_term(combined)
    var = (n1 * n2 / 12.0) * ((n + 1) - tie / (n * (n - 1)))
    if var <= 0:
        return ComparisonResult(u, 1.0, False, "normal_approx")
    delta = u - mean
    correction = 0.5 * math.copysign(1.0, delta) if delta != 0 else 0.0
    z = (delta - correction) / math.sqrt(var)
    p = min(1.0, 2.0 * _normal_sf(abs(z)))
    return ComparisonResult(u, p, p < alpha, "normal_approx")


def practical_difference(acc_a: Sequence[float], acc_b: Sequence[float],
                         noise_floors: Sequence[float]) -> bool:
    """Whether the average noise-scaled accuracy gap exceeds one.

    Each per-frame difference is divided by that frame's annotation noise
    floor; frames with a zero floor carry no evidence and are dropped (the
    averaging count shrinks with them).  With no usable frames the trackers
    are not practically different.
    """
    xa = _as_finite_array(acc_a, "acc_a")
    xb = _as_finite_array(acc_b, "acc_b")
    g = _as_finite_array(noise_floors, "noise_floors")
    if not (xa.size == xb.size == g.size):
        raise ContractError("accuracy vectors and noise floors must align")
    if np.any(g < 0):
        raise ContractError("noise floors must be >= 0")
    usable = g > 0
    t = int(np.count_nonzero(usable))
    if t == 0:
        return False
    score = abs(float(np.sum((xa[usable] - xb[usable]) / g[usable]))) / t
    return score > 1.0


def accuracy_equivalent(acc_a: Sequence[float], acc_b: Sequence[float],
                        noise_floors: Sequence[float], alpha: float = 0.05) -> bool:
    """Accuracy equivalence: differences insignificant or below the noise floor.

    Inputs are aligned per-frame mean overlaps; frames where either entry is
    NaN (undefined for that tracker) are excluded pairwise.
    """
    xa = np.asarray(acc_a, dtype=float)
    xb = np.asarray(acc_b, dtype=float)
    g = np.asarray(noise_floors, dtype=float)
    if not (xa.shape == xb.shape == g.shape) or xa.ndim != 1:
        raise ContractError("accuracy vectors and noise floors must align")
    paired = np.isfinite(xa) & np.isfinite(xb)
    if not np.any(paired):
        return True
    xa, xb, g = xa[paired], xb[paired], g[paired]
    test = signed_rank(xa - xb, alpha=alpha)
    if not test.significant:
        return True
    return not practical_difference(xa, xb, g)


def robustness_equivalent(failures_a: Sequence[float], failures_b: Sequence[float],
                          alpha: float = 0.05) -> bool:
    """Robustness equivalence: per-repetition failure counts not rank-sum separable."""
    return not rank_sum(failures_a, failures_b, alpha=alpha).significant
