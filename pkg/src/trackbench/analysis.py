"""Estimator moment algebra with Monte Carlo checks, plus result diagnostics.

The first half treats two idealized measurement setups analytically: overlap
averaged over sequences where a tracker either runs to the end or dies at a
random critical point (with or without a reset that discards a fixed number
of frames), and overlap averaged under per-sequence versus per-frame
attribute annotation.  Closed-form means and variances are paired with a
direct simulation of the same generative story so each can falsify the other.

The second half diagnoses stored experiment results: the overlap curve after
re-initialization, the stability of ranks under dataset subsampling, and
per-sequence difficulty from failure counts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import SequenceRecord
from .errors import ContractError, ParameterError
from .geometry import Region, overlap
from .measures import ResultsView, Scope
from .ranking import evaluate_scope, rank
from .runner import FAIL, INIT, Trajectory

__all__ = [
    "AnnotationSimParams",
    "DifficultyReport",
    "Moments",
    "ReinitSimParams",
    "annotation_moments",
    "burnin_curve",
    "burnin_curve_all",
    "clipped_normal_moments",
    "clipped_normal_params",
    "difficulty",
    "difficulty_level",
    "mixture_moments",
    "rank_variance_study",
    "reinit_component_moments",
    "reinit_moments",
    "sample_unit_overlaps",
    "simulate_estimators",
    "write_burnin_csv",
    "write_difficulty_csv",
    "write_difficulty_curves",
]

REINIT_KINDS = ("NOR", "WIR")
ANNOTATION_KINDS = ("GLA", "PFA")


@dataclass(frozen=True)
class Moments:
    """First two central moments of a scalar estimator."""

    mean: float
    variance: float

    def __post_init__(self) -> None:
        if self.variance < 0:
            raise ParameterError("variance must be >= 0")

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class ReinitSimParams:
    """Idealized benchmark: each sequence may die once at a random point.

    A failing sequence hits its critical point a uniform fraction of the way
    in.  Without a reset the remainder scores zero; with a reset the run
    resumes after discarding ``reinit_gap`` frames.
    """

    mean_overlap: float = 0.63
    overlap_std: float = 0.4
    sequences: int = 25
    frames: int = 150
    failure_prob: float = 0.5
    reinit_gap: int = 15

    def __post_init__(self) -> None:
        if not 0.0 <= self.mean_overlap <= 1.0:
            raise ParameterError("mean_overlap must be within [0, 1]")
        if self.overlap_std < 0:
            raise ParameterError("overlap_std must be >= 0")
        if self.sequences < 1 or self.frames < 1:
            raise ParameterError("sequences and frames must be positive")
        if not 0.0 <= self.failure_prob <= 1.0:
            raise ParameterError("failure_prob must be within [0, 1]")
        if not 0 <= self.reinit_gap < self.frames:
            raise ParameterError("reinit_gap must be < frames")


@dataclass(frozen=True)
class AnnotationSimParams:
    """Idealized attribute labelling: true frames diluted by others.

    Per-sequence (global) annotation drags in ``contamination`` times as many
    unrelated frames per attribute frame; per-frame annotation instead admits
    a ``false_rate`` fraction of wrongly labelled frames.
    """

    mean_overlap: float = 0.63
    other_mean_overlap: float = 0.3
    overlap_std: float = 0.2
    sequences: int = 25
    attribute_frames: int = 150
    contamination: float = 2.0
    false_rate: float = 0.1

    def __post_init__(self) -> None:
        for field in ("mean_overlap", "other_mean_overlap"):
            if not 0.0 <= getattr(self, field) <= 1.0:
                raise ParameterError(f"{field} must be within [0, 1]")
        if self.overlap_std < 0:
            raise ParameterError("overlap_std must be >= 0")
        if self.sequences < 1 or self.attribute_frames < 1:
            raise ParameterError("sequences and attribute_frames must be positive")
        if self.contamination < 0 or self.false_rate < 0:
            raise ParameterError("contamination and false_rate must be >= 0")


def mixture_moments(p: float, fast: Moments, slow: Moments) -> Moments:
    """Moments of a two-component mixture taken with weight ``p`` on fast."""
    if not 0.0 <= p <= 1.0:
        raise ParameterError("mixture weight must be within [0, 1]")
    if p == 0.0:
        return slow
    if p == 1.0:
        return fast
    mean = p * fast.mean + (1.0 - p) * slow.mean
    spread = (
        p * fast.variance
        + (1.0 - p) * slow.variance
        + p * (1.0 - p) * (fast.mean - slow.mean) ** 2
    )
    return Moments(mean, max(spread, 0.0))


def _check_kind(kind: str, allowed: Tuple[str, ...]) -> None:
    if kind not in allowed:
        raise ParameterError(f"kind must be one of {allowed}, got {kind!r}")


def reinit_component_moments(
    kind: str, params: ReinitSimParams
) -> Tuple[float, Moments, Moments]:
    """Per-sequence mixture pieces: (failure weight, failed, clean).

    Composing these with :func:`mixture_moments` and dividing the variance by
    the sequence count must reproduce :func:`reinit_moments` exactly; the two
    routes are kept separate so they can cross-check each other.
    """
    _check_kind(kind, REINIT_KINDS)
    mu, var = params.mean_overlap, params.overlap_std**2
    n_frames = params.frames
    slow = Moments(mu, var / n_frames)
    if kind == "NOR":
        # Uniform critical point: half the frames survive on average, and the
        # uniform fraction itself contributes mu^2/12 of spread.
        fast = Moments(mu / 2.0, var / (2.0 * n_frames) + mu**2 / 12.0)
    else:
        kept = n_frames - params.reinit_gap
        fast = Moments(mu, var / kept)
    return params.failure_prob, fast, slow


def reinit_moments(kind: str, params: ReinitSimParams) -> Moments:
    """Closed-form moments of the overlap estimate with/without resets."""
    _check_kind(kind, REINIT_KINDS)
    mu, var = params.mean_overlap, params.overlap_std**2
    n_seq, n_frames, p = params.sequences, params.frames, params.failure_prob
    if kind == "NOR":
        mean = mu * (1.0 - p / 2.0)
        spread = (2.0 - p) * var / (2.0 * n_seq * n_frames) + p * (
            4.0 - 3.0 * p
        ) * mu**2 / (12.0 * n_seq)
    else:
        kept = n_frames - params.reinit_gap
        mean = mu
        spread = var * (n_frames - params.reinit_gap * (1.0 - p)) / (
            n_seq * n_frames * kept
        )
    return Moments(mean, spread)


def annotation_moments(kind: str, params: AnnotationSimParams) -> Moments:
    """Closed-form moments under global vs per-frame attribute labelling."""
    _check_kind(kind, ANNOTATION_KINDS)
    ratio = params.contamination if kind == "GLA" else params.false_rate
    mean = (params.mean_overlap + ratio * params.other_mean_overlap) / (1.0 + ratio)
    spread = params.overlap_std**2 / (
        params.sequences * params.attribute_frames * (1.0 + ratio)
    )
    return Moments(mean, spread)


# --- bounded overlap sampling ----------------------------------------------

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)


def _norm_cdf(z: float) -> float:
    return 0.5 * (1.0 + math.erf(z / _SQRT2))


def _norm_pdf(z: float) -> float:
    return math.exp(-0.5 * z * z) * _INV_SQRT_2PI


def clipped_normal_moments(location: float, spread: float) -> Tuple[float, float]:
    """Mean and variance of a normal draw clamped onto [0, 1].

    The clamping piles the tail mass onto the endpoints, which is what lets
    the family reach standard deviations no renormalized density on [0, 1]
    could (a clipped draw with location 0.63 can have std 0.4).
    """
    if spread < 0:
        raise ParameterError("spread must be >= 0")
    if spread == 0.0:
        value = min(max(location, 0.0), 1.0)
        return value, 0.0
    a = (0.0 - location) / spread
    b = (1.0 - location) / spread
    cdf_a, cdf_b = _norm_cdf(a), _norm_cdf(b)
    pdf_a, pdf_b = _norm_pdf(a), _norm_pdf(b)
    middle = cdf_b - cdf_a
    mean = (1.0 - cdf_b) + location * middle + spread * (pdf_a - pdf_b)
    second = (
        (1.0 - cdf_b)
        + location**2 * middle
        + 2.0 * location * spread * (pdf_a - pdf_b)
        + spread**2 * (middle + a * pdf_a - b * pdf_b)
    )
    return mean, max(second - mean**2, 0.0)


@lru_cache(maxsize=None)
def clipped_normal_params(mean: float, std: float) -> Tuple[float, float]:
    """Solve for the (location, spread) whose clamped draw hits mean/std.

    Nested bisection: the inner pass re-centers the location for a candidate
    spread, the outer pass matches the standard deviation.  Any std below the
    hard cap sqrt(mean * (1 - mean)) is attainable.
    """
    if not 0.0 <= mean <= 1.0:
        raise ParameterError("mean must be within [0, 1]")
    if std < 0:
        raise ParameterError("std must be >= 0")
    if std == 0.0:
        return float(mean), 0.0
    if std * std >= mean * (1.0 - mean):
        raise ParameterError(
            "no distribution on [0, 1] reaches std %g at mean %g" % (std, mean)
        )

    def centered(spread: float) -> float:
        lo = mean - 8.0 * spread - 8.0
        hi = mean + 8.0 * spread + 8.0
        for _ in range(120):
            mid = 0.5 * (lo + hi)
            if clipped_normal_moments(mid, spread)[0] < mean:
                lo = mid
            else:
                hi = mid
        return 0.5 * (lo + hi)

    def spread_gap(spread: float) -> float:
        got = clipped_normal_moments(centered(spread), spread)[1]
        return math.sqrt(got) - std

    lo, hi = 1e-12, max(std, 1e-3)
    while spread_gap(hi) < 0.0:
        hi *= 2.0
        if hi > 1e9:
            raise ParameterError("spread target not attainable")
    for _ in range(120):
        mid = 0.5 * (lo + hi)
        if spread_gap(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    spread = 0.5 * (lo + hi)
    return centered(spread), spread


def sample_unit_overlaps(
    rng: np.random.Generator, mean: float, std: float, size
) -> np.ndarray:
    """Draw overlap-like values on [0, 1] with the exact target mean and std."""
    location, spread = clipped_normal_params(float(mean), float(std))
    if spread == 0.0:
        return np.full(size, location)
    return np.clip(rng.normal(location, spread, size), 0.0, 1.0)


# --- Monte Carlo ------------------------------------------------------------

_CHUNK = 512


def _reinit_chunk(
    kind: str, params: ReinitSimParams, n: int, rng: np.random.Generator
) -> np.ndarray:
    n_seq, n_frames = params.sequences, params.frames
    draws = sample_unit_overlaps(
        rng, params.mean_overlap, params.overlap_std, (n, n_seq, n_frames)
    )
    failed = rng.random((n, n_seq)) < params.failure_prob
    sums = np.cumsum(draws, axis=2)
    total = sums[:, :, -1]
    if kind == "NOR":
        critical = np.rint(rng.random((n, n_seq)) * n_frames).astype(int)
        index = np.clip(critical - 1, 0, n_frames - 1)
        before = np.take_along_axis(sums, index[:, :, None], axis=2)[:, :, 0]
        before = np.where(critical > 0, before, 0.0)
        per_seq = np.where(failed, before / n_frames, total / n_frames)
    else:
        kept = n_frames - params.reinit_gap
        per_seq = np.where(failed, sums[:, :, kept - 1] / kept, total / n_frames)
    return per_seq.mean(axis=1)


def _annotation_chunk(
    kind: str, params: AnnotationSimParams, n: int, rng: np.random.Generator
) -> np.ndarray:
    n_seq, n_att = params.sequences, params.attribute_frames
    ratio = params.contamination if kind == "GLA" else params.false_rate
    # The diluting contingent is rounded to whole frames.
    extra = int(round(ratio * n_att))
    attr = sample_unit_overlaps(
        rng, params.mean_overlap, params.overlap_std, (n, n_seq, n_att)
    )
    mixed_sum = attr.sum(axis=2)
    if extra:
        other = sample_unit_overlaps(
            rng, params.other_mean_overlap, params.overlap_std, (n, n_seq, extra)
        )
        mixed_sum = mixed_sum + other.sum(axis=2)
    per_seq = mixed_sum / (n_att + extra)
    return per_seq.mean(axis=1)


def simulate_estimators(
    kind: str,
    params: Union[ReinitSimParams, AnnotationSimParams],
    trials: int,
    seed: int = 0,
) -> Moments:
    """Empirical moments of one estimator under its exact generative story.

    Work proceeds in fixed-size trial chunks, each with a seed spawned from
    ``seed``, so the result does not depend on how chunks are scheduled.
    Returns the sample mean and the unbiased sample variance across trials.
    """
    if trials < 100:
        raise ParameterError("trials must be >= 100")
    if kind in REINIT_KINDS:
        if not isinstance(params, ReinitSimParams):
            raise ParameterError(f"{kind} needs ReinitSimParams")
        runner = _reinit_chunk
    elif kind in ANNOTATION_KINDS:
        if not isinstance(params, AnnotationSimParams):
            raise ParameterError(f"{kind} needs AnnotationSimParams")
        runner = _annotation_chunk
    else:
        raise ParameterError(
            f"kind must be one of {REINIT_KINDS + ANNOTATION_KINDS}, got {kind!r}"
        )
    values = np.empty(trials)
    children = np.random.SeedSequence(seed).spawn(
        (trials + _CHUNK - 1) // _CHUNK
    )
    done = 0
    for child in children:
        n = min(_CHUNK, trials - done)
        values[done : done + n] = runner(kind, params, n, np.random.default_rng(child))
        done += n
    return Moments(float(values.mean()), float(values.var(ddof=1)))


# --- burn-in curve ----------------------------------------------------------


def _post_init_windows(
    trajectory: Trajectory, groundtruth: Sequence[Region], horizon: int
) -> List[np.ndarray]:
    windows = []
    entries = trajectory.entries
    for start, entry in enumerate(entries):
        if not (isinstance(entry, int) and entry == INIT):
            continue
        row = np.full(horizon, np.nan)
        for offset in range(1, horizon + 1):
            t = start + offset
            if t >= len(entries) or isinstance(entries[t], int):
                break
            row[offset - 1] = overlap(groundtruth[t], entries[t])
        windows.append(row)
    return windows


def _average_windows(windows: List[np.ndarray], horizon: int):
    if not windows:
        return np.empty(0), np.empty(0)
    stack = np.vstack(windows)
    defined = ~np.isnan(stack)
    counts = defined.sum(axis=0)
    sums = np.where(defined, stack, 0.0).sum(axis=0)
    curve = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return curve, np.diff(curve)


def burnin_curve(
    trajectories: Iterable[Trajectory],
    groundtruth: Sequence[Region],
    horizon: int = 100,
):
    """Average overlap at offsets 1..horizon after every (re-)initialization.

    Windows end at the sequence end or the next non-region entry; offsets no
    window reaches average to NaN.  Frames inside the burn-in exclusion are
    deliberately included: the curve exists to measure what happens there.
    Returns ``(curve, first difference)``; both are empty when the runs hold
    no initializations at all.
    """
    if horizon < 1:
        raise ParameterError("horizon must be >= 1")
    windows: List[np.ndarray] = []
    for trajectory in trajectories:
        windows.extend(_post_init_windows(trajectory, groundtruth, horizon))
    return _average_windows(windows, horizon)


def burnin_curve_all(
    runs: Mapping[str, Sequence[Trajectory]],
    dataset: Mapping[str, SequenceRecord],
    horizon: int = 100,
):
    """One tracker's burn-in curve pooled over every sequence it ran."""
    if horizon < 1:
        raise ParameterError("horizon must be >= 1")
    windows: List[np.ndarray] = []
    for name in sorted(runs):
        if name not in dataset:
            raise ContractError(f"sequence {name!r} missing from dataset")
        groundtruth = dataset[name].groundtruth
        for trajectory in runs[name]:
            windows.extend(_post_init_windows(trajectory, groundtruth, horizon))
    return _average_windows(windows, horizon)


def write_burnin_csv(path, curve: np.ndarray, derivative: np.ndarray) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["offset", "overlap", "derivative"])
        for i, value in enumerate(curve):
            slope = derivative[i] if i < len(derivative) else math.nan
            writer.writerow(
                [
                    i + 1,
                    "" if math.isnan(value) else "%.4f" % value,
                    "" if math.isnan(slope) else "%.4f" % slope,
                ]
            )


# --- rank stability under subsampling ---------------------------------------


def rank_variance_study(
    view: ResultsView,
    subset_size: int = 15,
    n_subsets: int = 50,
    with_tests: bool = True,
    seed: int = 0,
    alpha: float = 0.05,
    correction: str = "mean",
) -> float:
    """Variance of combined ranks over random sequence subsets.

    Draws ``n_subsets`` subsets without replacement, ranks all trackers on
    the pooled scope of each, and returns the per-tracker rank variance
    (population form, so a single subset gives 0) averaged over trackers.
    With ``with_tests`` False the raw measure ranks are used instead of the
    equivalence-corrected ones, which is the comparison the study exists for.
    """
    names = list(view.sequences)
    if not 1 <= subset_size <= len(names):
        raise ParameterError("subset_size must be within [1, sequence count]")
    if n_subsets < 1:
        raise ParameterError("n_subsets must be >= 1")
    rng = np.random.default_rng(seed)
    rows: List[Dict[str, float]] = []
    for _ in range(n_subsets):
        picked = rng.choice(len(names), size=subset_size, replace=False)
        table = evaluate_scope(
            view.subset(names[i] for i in picked),
            Scope("pooled"),
            alpha=alpha,
            correction=correction,
        )
        if table is None:
            continue
        if with_tests:
            combined = dict(zip(table.trackers, table.combined))
        else:
            acc = rank(table.accuracy_raw, "higher_better")
            rob = rank(table.robustness_raw, "lower_better")
            combined = {
                t: (a + r) / 2.0
                for t, a, r in zip(table.trackers, acc, rob)
            }
        rows.append(combined)
    if not rows:
        raise ParameterError("no subset produced defined measures")
    trackers = sorted(rows[0])
    matrix = np.array([[row[t] for t in trackers] for row in rows])
    return float(np.mean(np.var(matrix, axis=0)))


# --- sequence difficulty -----------------------------------------------------


@dataclass(frozen=True)
class DifficultyReport:
    """Failure pressure on one sequence across the whole tracker set."""

    sequence: str
    counts: Tuple[int, ...]
    area: float
    peak: int
    peak_frame: int
    level: str

    @classmethod
    def from_counts(cls, sequence: str, counts: Tuple[int, ...]) -> "DifficultyReport":
        if not counts:
            raise ParameterError("counts must be non-empty")
        area = float(sum(counts)) / len(counts)
        peak = max(counts)
        return cls(
            sequence=sequence,
            counts=tuple(int(c) for c in counts),
            area=area,
            peak=int(peak),
            peak_frame=counts.index(peak) + 1,
            level=difficulty_level(area),
        )


def difficulty_level(area: float) -> str:
    if area > 3.0:
        return "hard"
    if area > 2.0:
        return "intermediate"
    if area > 1.0:
        return "intermediate/easy"
    return "easy"


def difficulty(
    runs: Mapping[str, Mapping[str, Sequence[Trajectory]]],
    dataset: Union[Mapping[str, SequenceRecord], Iterable[SequenceRecord]],
) -> Dict[str, DifficultyReport]:
    """Per-frame count of trackers that failed there, summarized per sequence.

    A tracker counts at a frame when any of its repetitions recorded a
    failure at that frame, so repetition count does not inflate difficulty.
    """
    if not runs:
        raise ParameterError("no results given")
    records = (
        dict(dataset)
        if isinstance(dataset, Mapping)
        else {r.name: r for r in dataset}
    )
    sequences = sorted({name for per_seq in runs.values() for name in per_seq})
    out: Dict[str, DifficultyReport] = {}
    for name in sequences:
        if name not in records:
            raise ContractError(f"sequence {name!r} missing from dataset")
        length = len(records[name].frames)
        counts = np.zeros(length, dtype=int)
        for per_seq in runs.values():
            if name not in per_seq:
                continue
            failed = np.zeros(length, dtype=bool)
            for trajectory in per_seq[name]:
                if len(trajectory) != length:
                    raise ContractError(f"trajectory length mismatch on {name!r}")
                for t, entry in enumerate(trajectory.entries):
                    if isinstance(entry, int) and entry == FAIL:
                        failed[t] = True
            counts += failed
        out[name] = DifficultyReport.from_counts(name, tuple(int(c) for c in counts))
    return out


def write_difficulty_csv(path, reports: Mapping[str, DifficultyReport]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["sequence", "area", "max", "max_frame", "level"])
        for name in sorted(reports):
            report = reports[name]
            writer.writerow(
                [
                    name,
                    "%.2f" % report.area,
                    report.peak,
                    report.peak_frame,
                    report.level,
                ]
            )


def write_difficulty_curves(out_dir, reports: Mapping[str, DifficultyReport]) -> None:
    """One (frame, count) file per sequence for plotting difficulty curves."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    for name in sorted(reports):
        with open(root / f"{name}.csv", "w", encoding="utf-8", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["frame", "count"])
            for t, count in enumerate(reports[name].counts):
                writer.writerow([t + 1, count])
