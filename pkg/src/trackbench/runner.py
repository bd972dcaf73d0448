"""Repetition runner: re-initialization protocol and trajectory persistence.

A trajectory stores, per frame, either the tracker's reported region or one of
three integer codes:

    1  INIT  the tracker was (re)initialized on this frame
    2  FAIL  overlap with ground truth dropped to the failure threshold
    0  SKIP  frame not processed (post-failure gap, absent target, error tail)

After a FAIL the next ``n_skip`` frames are skipped and re-initialization is
deferred to the first following frame whose ground truth is not absent.  The
``n_burnin`` frames after every INIT keep their regions but are marked invalid
so they never contribute to accuracy.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import SequenceRecord
from .errors import (
    FormatError,
    ParameterError,
    ProtocolError,
    TrackerCrashError,
    TrackerTimeoutError,
)
from .geometry import (
    Absent,
    PerturbationSpec,
    Region,
    format_region,
    overlap,
    parse_region,
    perturb_rng,
)
from .protocol import Tracker, open_session

__all__ = [
    "FAIL",
    "INIT",
    "SKIP",
    "RunnerConfig",
    "Trajectory",
    "derive_seed",
    "load_experiment",
    "load_run",
    "load_runs",
    "run_experiment",
    "run_repetition",
    "save_run",
]

INIT = 1
FAIL = 2
SKIP = 0

_CODES = {INIT, FAIL, SKIP}
_ERROR_KINDS = ("none", "protocol", "timeout", "crash")


@dataclass(frozen=True)
class RunnerConfig:
    """Protocol parameters for one experiment."""

    n_skip: int = 5
    n_burnin: int = 10
    n_rep: int = 15
    failure_threshold: float = 0.0
    perturbation: Optional[PerturbationSpec] = None
    master_seed: int = 0

    def __post_init__(self) -> None:
        if self.n_skip < 0 or self.n_burnin < 0:
            raise ParameterError("n_skip and n_burnin must be >= 0")
        if self.n_rep < 1:
            raise ParameterError("n_rep must be >= 1")
        if not 0.0 <= self.failure_threshold < 1.0:
            raise ParameterError("failure_threshold must be in [0, 1)")


@dataclass(frozen=True)
class Trajectory:
    """One repetition of one tracker on one sequence."""

    entries: Tuple[Union[Region, int], ...]
    valid: Tuple[bool, ...]
    seed: int
    n_skip: int
    n_burnin: int
    error: str = "none"
    duration: float = 0.0

    @classmethod
    def from_entries(
        cls,
        entries: Sequence[Union[Region, int]],
        n_skip: int,
        n_burnin: int,
        seed: int,
        error: str = "none",
        duration: float = 0.0,
    ) -> "Trajectory":
        if error not in _ERROR_KINDS:
            raise ParameterError(f"unknown error kind {error!r}")
        for e in entries:
            if isinstance(e, int) and e not in _CODES:
                raise ParameterError(f"unknown trajectory code {e}")
        valid = [not isinstance(e, int) for e in entries]
        for t, e in enumerate(entries):
            if isinstance(e, int) and e == INIT:
                for k in range(t + 1, min(t + 1 + n_burnin, len(entries))):
                    valid[k] = False
        return cls(
            entries=tuple(entries),
            valid=tuple(valid),
            seed=seed,
            n_skip=n_skip,
            n_burnin=n_burnin,
            error=error,
            duration=duration,
        )

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def ok(self) -> bool:
        return self.error == "none"

    def failure_frames(self) -> List[int]:
        return [
            t for t, e in enumerate(self.entries) if isinstance(e, int) and e == FAIL
        ]

    def failure_count(self) -> int:
        return len(self.failure_frames())

    def init_frames(self) -> List[int]:
        return [
            t for t, e in enumerate(self.entries) if isinstance(e, int) and e == INIT
        ]


# --- seeding ---------------------------------------------------------------


def derive_seed(master_seed: int, tracker: str, sequence: str, rep: int) -> int:
    """Schedule-independent repetition seed: a 64-bit hash of the job key."""
    key = f"{master_seed}:{tracker}:{sequence}:{rep}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


def _sub_seed(base: int, role: str) -> int:
    # Separate streams for init perturbations and the tracker's own draws.
    key = f"{base}:{role}".encode("utf-8")
    return int.from_bytes(hashlib.sha256(key).digest()[:8], "big")


# --- the protocol loop -----------------------------------------------------


def run_repetition(
    session,
    sequence: SequenceRecord,
    config: RunnerConfig,
    rng: Optional[np.random.Generator] = None,
) -> Tuple[List[Union[Region, int]], str]:
    """Drive one repetition over an open session.

    Returns the per-frame entry list and the error kind ("none" if the
    repetition completed).  ``rng`` feeds initialization perturbations and is
    only consulted when the config carries a perturbation spec.
    """
    if config.perturbation is not None and rng is None:
        raise ParameterError("perturbed runs need an rng")
    gt = sequence.groundtruth
    paths = [str(p) for p in sequence.frames]
    n = len(paths)
    entries: List[Optional[Union[Region, int]]] = [None] * n

    t = 0
    while t < n and isinstance(gt[t], Absent):
        entries[t] = SKIP
        t += 1

    error = "none"
    try:
        while t < n:
            init_region = gt[t]
            if config.perturbation is not None:
                init_region = perturb_rng(init_region, config.perturbation, rng)
            session.initialize(paths[t], init_region)
            entries[t] = INIT
            t += 1
            failed_at: Optional[int] = None
            while t < n:
                reported = session.frame(paths[t])
                if overlap(gt[t], reported) <= config.failure_threshold:
                    entries[t] = FAIL
                    failed_at = t
                    t += 1
                    break
                entries[t] = reported
                t += 1
            if failed_at is None:
                break
            stop = min(failed_at + config.n_skip + 1, n)
            while t < stop:
                entries[t] = SKIP
                t += 1
            while t < n and isinstance(gt[t], Absent):
                entries[t] = SKIP
                t += 1
    except ProtocolError:
        error = "protocol"
    except TrackerTimeoutError:
        error = "timeout"
    except TrackerCrashError:
        error = "crash"
    if error != "none":
        for i in range(n):
            if entries[i] is None:
                entries[i] = SKIP
    assert all(e is not None for e in entries)
    return entries, error  # type: ignore[return-value]


def _run_one(
    tracker: Tracker,
    sequence: SequenceRecord,
    rep: int,
    config: RunnerConfig,
) -> Trajectory:
    base = derive_seed(config.master_seed, tracker.name, sequence.name, rep)
    rng = np.random.default_rng(_sub_seed(base, "init"))
    started = time.perf_counter()
    session = open_session(
        tracker,
        [str(p) for p in sequence.frames],
        sequence.groundtruth,
        seed=_sub_seed(base, "tracker"),
    )
    try:
        entries, error = run_repetition(session, sequence, config, rng)
    finally:
        session.quit()
    duration = time.perf_counter() - started
    return Trajectory.from_entries(
        entries,
        n_skip=config.n_skip,
        n_burnin=config.n_burnin,
        seed=base,
        error=error,
        duration=duration,
    )


def run_experiment(
    trackers: Sequence[Tracker],
    sequences: Union[Sequence[SequenceRecord], Dict[str, SequenceRecord]],
    config: RunnerConfig,
    results_root: Optional[Union[str, Path]] = None,
    experiment: str = "baseline",
    workers: int = 1,
) -> Dict[str, Dict[str, List[Trajectory]]]:
    """Run every (tracker, sequence, repetition) job.

    Jobs are independent: each owns a fresh tracker session and a seed derived
    from the job key alone, so the outcome does not depend on scheduling or
    worker count.  When ``results_root`` is given every trajectory is persisted
    in the results layout as it completes.
    """
    if workers < 1:
        raise ParameterError("workers must be >= 1")
    if isinstance(sequences, dict):
        # load_dataset hands back a name -> record mapping; accept it as-is.
        sequences = list(sequences.values())
    names = [t.name for t in trackers]
    if len(set(names)) != len(names):
        raise ParameterError("tracker names must be unique")

    jobs = [
        (tracker, sequence, rep)
        for tracker in trackers
        for sequence in sequences
        for rep in range(1, config.n_rep + 1)
    ]

    def execute(job):
        tracker, sequence, rep = job
        trajectory = _run_one(tracker, sequence, rep, config)
        if results_root is not None:
            out_dir = (
                Path(results_root) / tracker.name / experiment / sequence.name
            )
            save_run(out_dir, sequence.name, rep, trajectory)
        return trajectory

    if workers == 1:
        finished = [execute(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            finished = list(pool.map(execute, jobs))

    results: Dict[str, Dict[str, List[Trajectory]]] = {n: {} for n in names}
    for (tracker, sequence, _rep), trajectory in zip(jobs, finished):
        results[tracker.name].setdefault(sequence.name, []).append(trajectory)
    return results


# --- persistence -----------------------------------------------------------

_REP_FILE_RE = re.compile(r"^(?P<seq>.+)_(?P<rep>\d{3})\.txt$")


def _atomic_write(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def save_run(
    out_dir: Union[str, Path], sequence: str, rep: int, trajectory: Trajectory
) -> Path:
    """Persist one repetition as ``<sequence>_NNN.txt`` plus a ``.meta`` file."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = []
    for e in trajectory.entries:
        lines.append(str(e) if isinstance(e, int) else format_region(e))
    txt_path = out / f"{sequence}_{rep:03d}.txt"
    _atomic_write(txt_path, "".join(line + "\n" for line in lines))
    meta = (
        f"seed: {trajectory.seed}\n"
        f"n_skip: {trajectory.n_skip}\n"
        f"n_burnin: {trajectory.n_burnin}\n"
        f"error: {trajectory.error}\n"
        f"duration: {trajectory.duration:.4f}\n"
    )
    _atomic_write(txt_path.with_suffix(".meta"), meta)
    return txt_path


def _parse_meta(path: Path) -> Dict[str, str]:
    fields: Dict[str, str] = {}
    for i, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        if ":" not in line:
            raise FormatError("malformed meta line", file=path, line=i)
        key, value = line.split(":", 1)
        fields[key.strip()] = value.strip()
    return fields


def load_run(txt_path: Union[str, Path]) -> Trajectory:
    """Read one persisted repetition (trajectory text plus meta)."""
    txt = Path(txt_path)
    entries: List[Union[Region, int]] = []
    for i, line in enumerate(txt.read_text(encoding="utf-8").splitlines(), start=1):
        token = line.strip()
        if token in {"0", "1", "2"}:
            entries.append(int(token))
            continue
        try:
            entries.append(parse_region(token))
        except Exception as exc:
            raise FormatError(f"bad trajectory line: {exc}", file=txt, line=i) from exc
    if not entries:
        raise FormatError("empty trajectory", file=txt)

    meta_path = txt.with_suffix(".meta")
    if not meta_path.is_file():
        raise FormatError("missing meta file", file=meta_path)
    meta = _parse_meta(meta_path)
    try:
        seed = int(meta["seed"])
        n_skip = int(meta["n_skip"])
        n_burnin = int(meta["n_burnin"])
        error = meta["error"]
        duration = float(meta.get("duration", "0"))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"bad meta contents: {exc}", file=meta_path) from exc
    return Trajectory.from_entries(
        entries,
        n_skip=n_skip,
        n_burnin=n_burnin,
        seed=seed,
        error=error,
        duration=duration,
    )


def load_runs(
    results_root: Union[str, Path], tracker: str, experiment: str
) -> Dict[str, List[Trajectory]]:
    """Reload every stored repetition for one tracker and experiment.

    Returns {sequence name: trajectories in repetition order}.  The result is
    exactly what ``run_experiment`` produced for that tracker: reruns of the
    analysis never need the tracker binaries.
    """
    root = Path(results_root) / tracker / experiment
    if not root.is_dir():
        raise FormatError("no stored results", file=root)
    out: Dict[str, List[Trajectory]] = {}
    for seq_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        reps: List[Tuple[int, Path]] = []
        for f in seq_dir.iterdir():
            m = _REP_FILE_RE.match(f.name)
            if m and m.group("seq") == seq_dir.name:
                reps.append((int(m.group("rep")), f))
        if not reps:
            continue
        out[seq_dir.name] = [load_run(path) for _, path in sorted(reps)]
    return out


def load_experiment(
    results_root: Union[str, Path], experiment: str
) -> Dict[str, Dict[str, List[Trajectory]]]:
    """Reload one experiment for every tracker found under ``results_root``."""
    root = Path(results_root)
    if not root.is_dir():
        raise FormatError("no stored results", file=root)
    out: Dict[str, Dict[str, List[Trajectory]]] = {}
    for tracker_dir in sorted(p for p in root.iterdir() if p.is_dir()):
        if (tracker_dir / experiment).is_dir():
            out[tracker_dir.name] = load_runs(root, tracker_dir.name, experiment)
    if not out:
        raise FormatError("experiment %r has no stored runs" % experiment, file=root)
    return out
