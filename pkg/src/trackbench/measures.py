"""Accuracy, robustness and reliability across pooling scopes.

Accuracy is the mean over valid frames of the per-frame overlap averaged over
repetitions; frames holding a code (INIT/FAIL/SKIP) or lying in a burn-in
window are invalid.  Robustness is the average number of failures per
repetition over the frames of a scope.  A scope is either the whole dataset
pooled into one super-sequence, the frames carrying one attribute channel, or
a single sequence.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import CHANNELS, SequenceRecord
from .errors import ContractError, ParameterError
from .geometry import overlap
from .runner import FAIL, Trajectory

__all__ = [
    "DEFAULT_HORIZON",
    "MeasureRow",
    "ResultsView",
    "Scope",
    "accuracy",
    "default_scopes",
    "measure_table",
    "reliability",
    "robustness",
    "write_measures_csv",
]

DEFAULT_HORIZON = 100

_SCOPE_KINDS = ("pooled", "attribute", "sequence")


@dataclass(frozen=True)
class Scope:
    """One pooling strategy: the whole dataset, one attribute, or one sequence."""

    kind: str
    key: Optional[str] = None

    def __post_init__(self) -> None:
        if self.kind not in _SCOPE_KINDS:
            raise ParameterError(f"unknown scope kind {self.kind!r}")
        if self.kind == "pooled" and self.key is not None:
            raise ParameterError("pooled scope takes no key")
        if self.kind != "pooled" and not self.key:
            raise ParameterError(f"{self.kind} scope needs a key")
        if self.kind == "attribute" and self.key not in CHANNELS:
            raise ParameterError(f"unknown attribute channel {self.key!r}")

    @property
    def label(self) -> str:
        return self.kind if self.kind == "pooled" else f"{self.kind}:{self.key}"


def default_scopes(
    dataset: Mapping[str, SequenceRecord],
    kinds: Sequence[str] = ("pooled", "attribute", "sequence"),
) -> List[Scope]:
    out: List[Scope] = []
    if "pooled" in kinds:
        out.append(Scope("pooled"))
    if "attribute" in kinds:
        out.extend(Scope("attribute", c) for c in CHANNELS)
    if "sequence" in kinds:
        out.extend(Scope("sequence", name) for name in sorted(dataset))
    return out


@dataclass(frozen=True)
class _Stream:
    # Per (tracker, sequence): overlaps (n_rep, n_frames) with NaN on invalid
    # frames and error repetitions; failure flags likewise zeroed for errors.
    overlaps: np.ndarray
    failures: np.ndarray
    ok: np.ndarray


def _nanmean_rows(values: np.ndarray) -> np.ndarray:
    # nanmean over axis 0 without the all-NaN warning
    mask = ~np.isnan(values)
    counts = mask.sum(axis=0)
    sums = np.where(mask, values, 0.0).sum(axis=0)
    out = np.full(values.shape[1], np.nan)
    nonzero = counts > 0
    out[nonzero] = sums[nonzero] / counts[nonzero]
    return out


class ResultsView:
    """Measure queries over one experiment's trajectories.

    Wraps {tracker: {sequence: [Trajectory]}} plus the dataset and caches the
    derived per-frame streams, so repeated scope queries stay cheap.
    """

    def __init__(
        self,
        runs: Mapping[str, Mapping[str, Sequence[Trajectory]]],
        dataset: Union[Mapping[str, SequenceRecord], Iterable[SequenceRecord]],
    ):
        if isinstance(dataset, Mapping):
            self.records: Dict[str, SequenceRecord] = dict(dataset)
        else:
            self.records = {r.name: r for r in dataset}
        if not runs:
            raise ParameterError("no runs given")
        self.trackers: Tuple[str, ...] = tuple(sorted(runs))
        self.sequences: Tuple[str, ...] = tuple(sorted(next(iter(runs.values()))))
        for tracker, per_seq in runs.items():
            if tuple(sorted(per_seq)) != self.sequences:
                raise ContractError(
                    f"tracker {tracker!r} ran a different sequence set"
                )
        for name in self.sequences:
            if name not in self.records:
                raise ContractError(f"sequence {name!r} missing from dataset")
            length = len(self.records[name].frames)
            for tracker in self.trackers:
                for traj in runs[tracker][name]:
                    if len(traj) != length:
                        raise ContractError(
                            f"trajectory length mismatch on {name!r}"
                        )
        self._runs = {t: {s: list(runs[t][s]) for s in self.sequences}
                      for t in self.trackers}
        self._streams: Dict[Tuple[str, str], _Stream] = {}
        self._masks: Dict[Scope, Dict[str, np.ndarray]] = {}

    # -- stream construction

    def _stream(self, tracker: str, sequence: str) -> _Stream:
        key = (tracker, sequence)
        if key in self._streams:
            return self._streams[key]
        record = self.records[sequence]
        trajectories = self._runs[tracker][sequence]
        n_rep, n_frames = len(trajectories), len(record.frames)
        overlaps = np.full((n_rep, n_frames), np.nan)
        failures = np.zeros((n_rep, n_frames), dtype=bool)
        ok = np.zeros(n_rep, dtype=bool)
        for k, traj in enumerate(trajectories):
            if not traj.ok:
                continue
            ok[k] = True
            for t, (entry, valid) in enumerate(zip(traj.entries, traj.valid)):
                if valid:
                    overlaps[k, t] = overlap(record.groundtruth[t], entry)
                elif isinstance(entry, int) and entry == FAIL:
                    failures[k, t] = True
        stream = _Stream(overlaps=overlaps, failures=failures, ok=ok)
        self._streams[key] = stream
        return stream

    def phi(self, tracker: str, sequence: str) -> np.ndarray:
        """Per-frame accuracy averaged over the valid repetitions."""
        return _nanmean_rows(self._stream(tracker, sequence).overlaps)

    def subset(self, names: Iterable[str]) -> "ResultsView":
        """View over a subset of sequences, sharing this view's stream cache."""
        chosen = tuple(sorted(set(names)))
        missing = [n for n in chosen if n not in self.records]
        if missing:
            raise ParameterError(f"unknown sequences: {missing}")
        view = ResultsView(
            {t: {s: self._runs[t][s] for s in chosen} for t in self.trackers},
            {s: self.records[s] for s in chosen},
        )
        # Same trajectories, so the per-sequence streams are interchangeable.
        view._streams = self._streams
        return view

    # -- scopes

    def scope_masks(self, scope: Scope) -> Dict[str, np.ndarray]:
        if scope in self._masks:
            return self._masks[scope]
        masks: Dict[str, np.ndarray] = {}
        for name in self.sequences:
            record = self.records[name]
            if scope.kind == "pooled":
                mask = np.ones(len(record.frames), dtype=bool)
            elif scope.kind == "sequence":
                if name != scope.key:
                    continue
                mask = np.ones(len(record.frames), dtype=bool)
            else:
                mask = np.asarray(record.channel(scope.key), dtype=bool)
            masks[name] = mask
        if scope.kind == "sequence" and not masks:
            raise ParameterError(f"unknown sequence {scope.key!r}")
        self._masks[scope] = masks
        return masks

    def frames_in_scope(self, scope: Scope) -> int:
        return int(sum(m.sum() for m in self.scope_masks(scope).values()))

    def phi_stream(self, tracker: str, scope: Scope) -> np.ndarray:
        """Super-sequence concatenation of per-frame accuracies in the scope."""
        masks = self.scope_masks(scope)
        parts = [self.phi(tracker, name)[masks[name]] for name in sorted(masks)]
        return np.concatenate(parts) if parts else np.empty(0)

    def gamma_stream(self, scope: Scope) -> np.ndarray:
        """Per-frame noise floors aligned with ``phi_stream``."""
        masks = self.scope_masks(scope)
        parts = [
            np.full(int(masks[name].sum()), self.records[name].gamma)
            for name in sorted(masks)
        ]
        return np.concatenate(parts) if parts else np.empty(0)

    # -- measures

    def valid_frames(self, tracker: str, scope: Scope) -> int:
        stream = self.phi_stream(tracker, scope)
        return int(np.sum(~np.isnan(stream)))

    def accuracy(self, tracker: str, scope: Scope) -> Optional[float]:
        stream = self.phi_stream(tracker, scope)
        finite = stream[~np.isnan(stream)]
        if finite.size == 0:
            return None
        return float(finite.mean())

    def robustness(self, tracker: str, scope: Scope) -> Optional[float]:
        """Mean failures per repetition over the scope's frames.

        Error repetitions are excluded per sequence; a sequence with no
        completed repetition makes the measure undefined.
        """
        masks = self.scope_masks(scope)
        if self.frames_in_scope(scope) == 0:
            return None
        total = 0.0
        for name in sorted(masks):
            stream = self._stream(tracker, name)
            if not stream.ok.any():
                return None
            counts = stream.failures[stream.ok][:, masks[name]].sum(axis=1)
            total += float(counts.mean())
        return total

    def failure_samples(self, tracker: str, scope: Scope) -> np.ndarray:
        """Per-repetition failure totals over the scope, NaN where that
        repetition did not complete on every sequence of the scope."""
        masks = self.scope_masks(scope)
        names = sorted(masks)
        n_rep = len(self._runs[tracker][names[0]])
        samples = np.zeros(n_rep)
        for name in names:
            stream = self._stream(tracker, name)
            if len(stream.ok) != n_rep:
                raise ContractError("repetition counts differ across sequences")
            counts = stream.failures[:, masks[name]].sum(axis=1).astype(float)
            counts[~stream.ok] = np.nan
            samples = samples + counts
        return samples

    def error_count(self, tracker: str) -> int:
        return sum(
            1
            for name in self.sequences
            for traj in self._runs[tracker][name]
            if not traj.ok
        )

    def reliability(
        self, tracker: str, scope: Scope, horizon: int = DEFAULT_HORIZON
    ) -> Optional[float]:
        rho = self.robustness(tracker, scope)
        if rho is None:
            return None
        return reliability(rho, self.frames_in_scope(scope), horizon)


# -- functional wrappers and the formula ------------------------------------


def accuracy(
    runs: Mapping[str, Mapping[str, Sequence[Trajectory]]],
    dataset: Union[Mapping[str, SequenceRecord], Iterable[SequenceRecord]],
    scope: Scope,
) -> Dict[str, Optional[float]]:
    view = ResultsView(runs, dataset)
    return {t: view.accuracy(t, scope) for t in view.trackers}


def robustness(
    runs: Mapping[str, Mapping[str, Sequence[Trajectory]]],
    dataset: Union[Mapping[str, SequenceRecord], Iterable[SequenceRecord]],
    scope: Scope,
) -> Dict[str, Optional[float]]:
    view = ResultsView(runs, dataset)
    return {t: view.robustness(t, scope) for t in view.trackers}


def reliability(
    mean_failures: float, frames_in_scope: int, horizon: int = DEFAULT_HORIZON
) -> float:
    """Probability of surviving ``horizon`` frames without failure, under a
    memoryless failure model at the observed rate."""
    if frames_in_scope <= 0:
        raise ParameterError("frames_in_scope must be positive")
    if mean_failures < 0:
        raise ParameterError("mean failure count cannot be negative")
    if horizon < 0:
        raise ParameterError("horizon must be >= 0")
    return math.exp(-horizon * mean_failures / frames_in_scope)


# -- tabulation -------------------------------------------------------------


@dataclass(frozen=True)
class MeasureRow:
    tracker: str
    scope: str
    accuracy: Optional[float]
    robustness: Optional[float]
    reliability: Optional[float]
    failures_per_hundred: Optional[float]
    valid_frames: int
    scope_frames: int


def measure_table(
    view: ResultsView,
    scopes: Optional[Sequence[Scope]] = None,
    horizon: int = DEFAULT_HORIZON,
) -> List[MeasureRow]:
    if scopes is None:
        scopes = default_scopes(view.records)
    rows: List[MeasureRow] = []
    for scope in scopes:
        frames = view.frames_in_scope(scope)
        for tracker in view.trackers:
            rho_a = view.accuracy(tracker, scope)
            rho_r = view.robustness(tracker, scope)
            rel = None
            per_hundred = None
            if rho_r is not None and frames > 0:
                rel = reliability(rho_r, frames, horizon)
                per_hundred = 100.0 * rho_r / frames
            rows.append(
                MeasureRow(
                    tracker=tracker,
                    scope=scope.label,
                    accuracy=rho_a,
                    robustness=rho_r,
                    reliability=rel,
                    failures_per_hundred=per_hundred,
                    valid_frames=view.valid_frames(tracker, scope),
                    scope_frames=frames,
                )
            )
    return rows


def _cell(value: Optional[float]) -> str:
    return "" if value is None else f"{value:.4f}"


def write_measures_csv(path: Union[str, Path], rows: Sequence[MeasureRow]) -> Path:
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [
                "tracker",
                "scope",
                "accuracy",
                "robustness",
                "reliability",
                "failures_per_100",
                "valid_frames",
                "scope_frames",
            ]
        )
        for row in rows:
            writer.writerow(
                [
                    row.tracker,
                    row.scope,
                    _cell(row.accuracy),
                    _cell(row.robustness),
                    _cell(row.reliability),
                    _cell(row.failures_per_hundred),
                    row.valid_frames,
                    row.scope_frames,
                ]
            )
    return out
