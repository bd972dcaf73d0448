"""Rank lists, equivalence-corrected ranks, scope aggregation, AR plot data.

Raw ranks are competition ranks with average tie handling.  A tracker's
corrected rank is the mean raw rank of its equivalence group: itself plus
every tracker pairwise-equivalent to it.  Groups are deliberately per-tracker
with no transitive closure, since pairwise statistical equivalence is not a
transitive relation.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import ContractError, ParameterError
from .measures import MeasureRow, ResultsView, Scope, default_scopes
from .stats import _average_ranks, accuracy_equivalent, robustness_equivalent

__all__ = [
    "AGGREGATE_MODES",
    "ArPoint",
    "RankTable",
    "aggregate",
    "ar_plot_data",
    "corrected_ranks",
    "evaluate_scope",
    "rank",
    "rank_tables",
    "write_ar_svg",
    "write_rank_csv",
]

AGGREGATE_MODES = ("sequence_pooled", "attribute_normalized", "sequence_normalized")

_CORRECTIONS = ("mean", "min", "max")


def rank(values: Sequence[float], direction: str = "higher_better") -> np.ndarray:
    """Competition ranks 1..N, ties sharing the average of their positions."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise ParameterError("need a non-empty vector of values")
    if not np.all(np.isfinite(x)):
        raise ParameterError("values must be finite")
    if direction == "higher_better":
        return _average_ranks(-x)
    if direction == "lower_better":
        return _average_ranks(x)
    raise ParameterError(f"unknown direction {direction!r}")


def _check_equivalence(matrix: np.ndarray, n: int) -> np.ndarray:
    eq = np.asarray(matrix, dtype=bool)
    if eq.shape != (n, n):
        raise ContractError("equivalence matrix shape does not match values")
    if not np.all(np.diag(eq)):
        raise ContractError("equivalence must be reflexive")
    if not np.array_equal(eq, eq.T):
        raise ContractError("equivalence must be symmetric")
    return eq


def corrected_ranks(
    raw: Sequence[float],
    equivalence: Sequence[Sequence[bool]],
    correction: str = "mean",
) -> np.ndarray:
    """Replace each raw rank by a summary of its equivalence group's ranks."""
    if correction not in _CORRECTIONS:
        raise ParameterError(f"unknown correction {correction!r}")
    ranks = np.asarray(raw, dtype=float)
    eq = _check_equivalence(equivalence, ranks.size)
    out = np.empty_like(ranks)
    reduce = {"mean": np.mean, "min": np.min, "max": np.max}[correction]
    for i in range(ranks.size):
        out[i] = reduce(ranks[eq[i]])
    return out


@dataclass(frozen=True)
class RankTable:
    """Per-tracker A and R ranks for one scope (or one aggregation)."""

    trackers: Tuple[str, ...]
    scope: str
    accuracy_raw: Tuple[float, ...]
    robustness_raw: Tuple[float, ...]
    accuracy_rank: Tuple[float, ...]
    robustness_rank: Tuple[float, ...]
    accuracy_groups: Tuple[Tuple[str, ...], ...]
    robustness_groups: Tuple[Tuple[str, ...], ...]

    def __post_init__(self) -> None:
        n = len(self.trackers)
        for field_name in (
            "accuracy_raw",
            "robustness_raw",
            "accuracy_rank",
            "robustness_rank",
            "accuracy_groups",
            "robustness_groups",
        ):
            if len(getattr(self, field_name)) != n:
                raise ContractError(f"{field_name} length does not match trackers")

    @property
    def combined(self) -> Tuple[float, ...]:
        return tuple(
            (a + r) / 2.0
            for a, r in zip(self.accuracy_rank, self.robustness_rank)
        )

    def order(self) -> List[str]:
        """Tracker names sorted by combined rank, best first."""
        return [
            name
            for _, name in sorted(zip(self.combined, self.trackers))
        ]


def _singleton_groups(trackers: Sequence[str]) -> Tuple[Tuple[str, ...], ...]:
    return tuple((t,) for t in trackers)


def evaluate_scope(
    view: ResultsView,
    scope: Scope,
    alpha: float = 0.05,
    correction: str = "mean",
) -> Optional[RankTable]:
    """Rank all trackers within one scope, with equivalence correction.

    Returns None when any tracker's accuracy or robustness is undefined in
    the scope (e.g. an attribute no frame carries), so callers can drop the
    scope from averaging.
    """
    trackers = view.trackers
    accs = [view.accuracy(t, scope) for t in trackers]
    robs = [view.robustness(t, scope) for t in trackers]
    if any(v is None for v in accs) or any(v is None for v in robs):
        return None

    gammas = view.gamma_stream(scope)
    phi = {t: view.phi_stream(t, scope) for t in trackers}
    samples: Dict[str, np.ndarray] = {}
    for t in trackers:
        s = view.failure_samples(t, scope)
        samples[t] = s[~np.isnan(s)]

    n = len(trackers)
    acc_eq = np.eye(n, dtype=bool)
    rob_eq = np.eye(n, dtype=bool)
    for i in range(n):
        for j in range(i + 1, n):
            a_flag = accuracy_equivalent(
                phi[trackers[i]], phi[trackers[j]], gammas, alpha=alpha
            )
            if samples[trackers[i]].size == 0 or samples[trackers[j]].size == 0:
                # no completed repetitions to compare: nothing separates them
                r_flag = True
            else:
                r_flag = robustness_equivalent(
                    samples[trackers[i]], samples[trackers[j]], alpha=alpha
                )
            acc_eq[i, j] = acc_eq[j, i] = a_flag
            rob_eq[i, j] = rob_eq[j, i] = r_flag

    raw_a = rank(accs, "higher_better")
    raw_r = rank(robs, "lower_better")
    return RankTable(
        trackers=trackers,
        scope=scope.label,
        accuracy_raw=tuple(raw_a),
        robustness_raw=tuple(raw_r),
        accuracy_rank=tuple(corrected_ranks(raw_a, acc_eq, correction)),
        robustness_rank=tuple(corrected_ranks(raw_r, rob_eq, correction)),
        accuracy_groups=tuple(
            tuple(trackers[j] for j in range(n) if acc_eq[i, j]) for i in range(n)
        ),
        robustness_groups=tuple(
            tuple(trackers[j] for j in range(n) if rob_eq[i, j]) for i in range(n)
        ),
    )


def rank_tables(
    view: ResultsView,
    scopes: Optional[Sequence[Scope]] = None,
    alpha: float = 0.05,
    correction: str = "mean",
) -> List[RankTable]:
    """Evaluate every resolvable scope; scopes with undefined measures drop out."""
    if scopes is None:
        scopes = default_scopes(view.records)
    tables = []
    for scope in scopes:
        table = evaluate_scope(view, scope, alpha=alpha, correction=correction)
        if table is not None:
            tables.append(table)
    return tables


def _mean_columns(columns: Sequence[Sequence[float]]) -> Tuple[float, ...]:
    return tuple(np.mean(np.asarray(columns, dtype=float), axis=0))


def aggregate(tables: Sequence[RankTable], mode: str) -> RankTable:
    """Combine per-scope tables into one final table.

    ``sequence_pooled`` selects the single pooled-scope table; the normalized
    modes average corrected (and raw) ranks across attribute or sequence
    scopes.  The combined rank of the result is the mean of its accuracy and
    robustness ranks.
    """
    if mode not in AGGREGATE_MODES:
        raise ParameterError(f"unknown aggregation mode {mode!r}")
    if not tables:
        raise ContractError("no rank tables to aggregate")
    trackers = tables[0].trackers
    for table in tables:
        if table.trackers != trackers:
            raise ContractError("tracker sets differ across scopes")

    if mode == "sequence_pooled":
        pooled = [t for t in tables if t.scope == "pooled"]
        if len(pooled) != 1:
            raise ContractError("sequence_pooled needs exactly one pooled table")
        return pooled[0]

    prefix = "attribute:" if mode == "attribute_normalized" else "sequence:"
    chosen = [t for t in tables if t.scope.startswith(prefix)]
    if not chosen:
        raise ContractError(f"no {prefix[:-1]} scopes to aggregate")
    return RankTable(
        trackers=trackers,
        scope=mode,
        accuracy_raw=_mean_columns([t.accuracy_raw for t in chosen]),
        robustness_raw=_mean_columns([t.robustness_raw for t in chosen]),
        accuracy_rank=_mean_columns([t.accuracy_rank for t in chosen]),
        robustness_rank=_mean_columns([t.robustness_rank for t in chosen]),
        accuracy_groups=_singleton_groups(trackers),
        robustness_groups=_singleton_groups(trackers),
    )


# --- AR plots --------------------------------------------------------------


@dataclass(frozen=True)
class ArPoint:
    tracker: str
    x: float
    y: float


def ar_plot_data(
    rows: Sequence[MeasureRow], table: RankTable
) -> Tuple[List[ArPoint], List[ArPoint]]:
    """Per-tracker point records for the AR-rank and AR-raw plots.

    Rank points are (accuracy rank, robustness rank); raw points are
    (reliability at the default horizon, mean accuracy), matching the table's
    scope.
    """
    by_tracker = {r.tracker: r for r in rows if r.scope == table.scope}
    rank_points: List[ArPoint] = []
    raw_points: List[ArPoint] = []
    for i, name in enumerate(table.trackers):
        rank_points.append(
            ArPoint(name, table.accuracy_rank[i], table.robustness_rank[i])
        )
        row = by_tracker.get(name)
        if row is None:
            raise ContractError(f"no measure row for {name!r} in {table.scope!r}")
        if row.reliability is None or row.accuracy is None:
            raise ContractError(f"undefined measures for {name!r} in {table.scope!r}")
        raw_points.append(ArPoint(name, row.reliability, row.accuracy))
    return rank_points, raw_points


# --- emission --------------------------------------------------------------


def write_rank_csv(path: Union[str, Path], tables: Sequence[RankTable]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["tracker", "scope", "accuracy_rank", "robustness_rank", "combined"]
        )
        for table in tables:
            combined = table.combined
            for i, name in enumerate(table.trackers):
                writer.writerow(
                    [
                        name,
                        table.scope,
                        f"{table.accuracy_rank[i]:.2f}",
                        f"{table.robustness_rank[i]:.2f}",
                        f"{combined[i]:.2f}",
                    ]
                )
    return out


def write_ar_svg(
    path: Union[str, Path],
    points: Sequence[ArPoint],
    x_label: str,
    y_label: str,
    invert_x: bool = False,
    invert_y: bool = False,
    title: str = "",
) -> Path:
    """Standalone SVG scatter of AR points; presentation only.

    Rank plots invert both axes so the best tracker (rank 1, rank 1) sits in
    the top-right corner.
    """
    if not points:
        raise ParameterError("nothing to plot")
    width, height, margin = 480, 360, 56
    xs = [p.x for p in points]
    ys = [p.y for p in points]
    lo_x, hi_x = min(xs), max(xs)
    lo_y, hi_y = min(ys), max(ys)
    pad_x = (hi_x - lo_x) * 0.1 or 0.5
    pad_y = (hi_y - lo_y) * 0.1 or 0.5
    lo_x, hi_x = lo_x - pad_x, hi_x + pad_x
    lo_y, hi_y = lo_y - pad_y, hi_y + pad_y

    def sx(v: float) -> float:
        frac = (v - lo_x) / (hi_x - lo_x)
        if invert_x:
            frac = 1.0 - frac
        return margin + frac * (width - 2 * margin)

    def sy(v: float) -> float:
        frac = (v - lo_y) / (hi_y - lo_y)
        if invert_y:
            frac = 1.0 - frac
        return height - margin - frac * (height - 2 * margin)

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<line x1="{margin}" y1="{height - margin}" x2="{width - margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<line x1="{margin}" y1="{margin}" x2="{margin}" '
        f'y2="{height - margin}" stroke="black"/>',
        f'<text x="{width / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="12">{x_label}</text>',
        f'<text x="14" y="{height / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {height / 2:.1f})">{y_label}</text>',
    ]
    if title:
        parts.append(
            f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" '
            f'font-size="13">{title}</text>'
        )
    for extreme, label_fn in (
        ((lo_x, hi_x), lambda v: f'<text x="{sx(v):.1f}" y="{height - margin + 16}" '
                                 f'text-anchor="middle" font-size="10">{v:.2f}</text>'),
        ((lo_y, hi_y), lambda v: f'<text x="{margin - 6}" y="{sy(v) + 3:.1f}" '
                                 f'text-anchor="end" font-size="10">{v:.2f}</text>'),
    ):
        for v in extreme:
            parts.append(label_fn(v))
    for p in points:
        cx, cy = sx(p.x), sy(p.y)
        parts.append(
            f'<circle cx="{cx:.1f}" cy="{cy:.1f}" r="4" fill="steelblue"/>'
        )
        parts.append(
            f'<text x="{cx + 6:.1f}" y="{cy - 6:.1f}" font-size="10">{p.tracker}</text>'
        )
    parts.append("</svg>")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text("\n".join(parts), encoding="utf-8")
    return out
