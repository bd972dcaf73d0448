"""Workspace configuration shared by every command-line subcommand.

A workspace is one directory holding the dataset, the results tree and the
generated reports, described by a single INI file::

    [workspace]
    dataset = dataset
    results = results
    reports = reports
    alpha = 0.05
    horizon = 100
    master_seed = 0

    [runner]
    n_skip = 5
    n_burnin = 10
    n_rep = 15
    failure_threshold = 0.0

    [experiments.baseline]
    perturbation = none

    [experiments.perturbed]
    perturbation = 0.1

    [trackers.static]
    builtin = static

    [trackers.mine]
    command = python3 my_tracker.py
    timeout = 30

Every section and key is optional except that each tracker section needs
exactly one of ``builtin`` or ``command``.  Relative paths are resolved
against the directory containing the file.  A perturbation is ``none``, a
single amplitude (applied to position and size, rotation untouched), or
explicit ``position=A size=B rotation=C`` pairs.
"""

from __future__ import annotations

import configparser
import dataclasses
import math
import shlex
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

from .errors import ConfigError
from .geometry import PerturbationSpec
from .protocol import DEFAULT_TIMEOUT, BUILTIN_KINDS, Tracker, TrackerCommand, builtin_tracker
from .runner import RunnerConfig

__all__ = ["ExperimentSpec", "WorkspaceConfig", "load_workspace"]

_WORKSPACE_KEYS = {"dataset", "results", "reports", "alpha", "horizon", "master_seed"}
_RUNNER_KEYS = {"n_skip", "n_burnin", "n_rep", "failure_threshold"}
_EXPERIMENT_KEYS = {"perturbation"}


@dataclass(frozen=True)
class ExperimentSpec:
    """One named experiment: how initialization regions are disturbed."""

    name: str
    perturbation: Optional[PerturbationSpec] = None


@dataclass(frozen=True)
class WorkspaceConfig:
    path: Path
    dataset_root: Path
    results_root: Path
    reports_root: Path
    alpha: float = 0.05
    horizon: int = 100
    master_seed: int = 0
    n_skip: int = 5
    n_burnin: int = 10
    n_rep: int = 15
    failure_threshold: float = 0.0
    trackers: Tuple[Tracker, ...] = ()
    experiments: Tuple[ExperimentSpec, ...] = (ExperimentSpec("baseline"),)

    def tracker(self, name: str) -> Tracker:
        for t in self.trackers:
            if t.name == name:
                return t
        known = [t.name for t in self.trackers]
        raise ConfigError(f"unknown tracker {name!r} (configured: {known})", file=self.path)

    def experiment(self, name: str) -> ExperimentSpec:
        for e in self.experiments:
            if e.name == name:
                return e
        known = [e.name for e in self.experiments]
        raise ConfigError(f"unknown experiment {name!r} (configured: {known})", file=self.path)

    def runner_config(self, experiment: Union[str, ExperimentSpec]) -> RunnerConfig:
        spec = self.experiment(experiment) if isinstance(experiment, str) else experiment
        return RunnerConfig(
            n_skip=self.n_skip,
            n_burnin=self.n_burnin,
            n_rep=self.n_rep,
            failure_threshold=self.failure_threshold,
            perturbation=spec.perturbation,
            master_seed=self.master_seed,
        )

    def with_seed(self, master_seed: Optional[int]) -> "WorkspaceConfig":
        if master_seed is None:
            return self
        return dataclasses.replace(self, master_seed=master_seed)


def _get_float(section: configparser.SectionProxy, key: str, default: float, path: Path) -> float:
    raw = section.get(key)
    if raw is None:
        return default
    try:
        value = float(raw)
    except ValueError as exc:
        raise ConfigError(f"not a number: {raw!r}", file=path, key=f"{section.name}.{key}") from exc
    if not math.isfinite(value):
        raise ConfigError(f"must be finite, got {raw!r}", file=path, key=f"{section.name}.{key}")
    return value


def _get_int(section: configparser.SectionProxy, key: str, default: int, path: Path) -> int:
    raw = section.get(key)
    if raw is None:
        return default
    try:
        return int(raw)
    except ValueError as exc:
        raise ConfigError(f"not an integer: {raw!r}", file=path, key=f"{section.name}.{key}") from exc


def _check_keys(section: configparser.SectionProxy, allowed, path: Path) -> None:
    for key in section:
        if key not in allowed:
            raise ConfigError(
                f"unknown key (expected one of {sorted(allowed)})",
                file=path,
                key=f"{section.name}.{key}",
            )


def parse_perturbation(text: str, path: Path, key: str) -> Optional[PerturbationSpec]:
    """Decode an experiment's perturbation value (see the module docstring)."""
    text = text.strip()
    if text in ("", "none"):
        return None
    try:
        amplitude = float(text)
    except ValueError:
        amplitude = None
    if amplitude is not None:
        return PerturbationSpec(position_amplitude=amplitude, size_amplitude=amplitude)
    values: Dict[str, float] = {}
    for token in text.split():
        name, sep, raw = token.partition("=")
        if not sep or name not in ("position", "size", "rotation"):
            raise ConfigError(f"bad perturbation token {token!r}", file=path, key=key)
        try:
            values[name] = float(raw)
        except ValueError as exc:
            raise ConfigError(f"bad perturbation token {token!r}", file=path, key=key) from exc
    return PerturbationSpec(
        position_amplitude=values.get("position", 0.0),
        size_amplitude=values.get("size", 0.0),
        rotation_amplitude=values.get("rotation", 0.0),
    )


def _parse_tracker(section: configparser.SectionProxy, name: str, path: Path) -> Tracker:
    builtin = section.get("builtin")
    command = section.get("command")
    if (builtin is None) == (command is None):
        raise ConfigError(
            "tracker needs exactly one of 'builtin' or 'command'",
            file=path,
            key=section.name,
        )
    if builtin is not None:
        if builtin not in BUILTIN_KINDS:
            raise ConfigError(
                f"unknown builtin {builtin!r} (one of {list(BUILTIN_KINDS)})",
                file=path,
                key=f"{section.name}.builtin",
            )
        params = {
            key: _get_float(section, key, 0.0, path)
            for key in section
            if key != "builtin"
        }
        return builtin_tracker(builtin, name=name, **params)
    _check_keys(section, {"command", "timeout"}, path)
    argv = tuple(shlex.split(command))
    if not argv:
        raise ConfigError("empty command", file=path, key=f"{section.name}.command")
    timeout = _get_float(section, "timeout", DEFAULT_TIMEOUT, path)
    return TrackerCommand(name=name, argv=argv, timeout=timeout)


def load_workspace(path: Union[str, Path]) -> WorkspaceConfig:
    """Parse a workspace file; relative paths resolve against its directory."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError("workspace file not found", file=path)
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    try:
        with path.open(encoding="utf-8") as fh:
            parser.read_file(fh)
    except configparser.Error as exc:
        # configparser's message carries the offending line number.
        raise ConfigError(str(exc), file=path) from exc

    root = path.resolve().parent
    trackers = []
    experiments = []
    workspace = {}
    runner = {}
    for name in parser.sections():
        section = parser[name]
        if name == "workspace":
            _check_keys(section, _WORKSPACE_KEYS, path)
            workspace = {
                "dataset": section.get("dataset", "dataset"),
                "results": section.get("results", "results"),
                "reports": section.get("reports", "reports"),
                "alpha": _get_float(section, "alpha", 0.05, path),
                "horizon": _get_int(section, "horizon", 100, path),
                "master_seed": _get_int(section, "master_seed", 0, path),
            }
        elif name == "runner":
            _check_keys(section, _RUNNER_KEYS, path)
            runner = {
                "n_skip": _get_int(section, "n_skip", 5, path),
                "n_burnin": _get_int(section, "n_burnin", 10, path),
                "n_rep": _get_int(section, "n_rep", 15, path),
                "failure_threshold": _get_float(section, "failure_threshold", 0.0, path),
            }
        elif name.startswith("experiments."):
            _check_keys(section, _EXPERIMENT_KEYS, path)
            exp_name = name[len("experiments.") :]
            if not exp_name:
                raise ConfigError("experiment section needs a name", file=path, key=name)
            spec = parse_perturbation(
                section.get("perturbation", "none"), path, f"{name}.perturbation"
            )
            experiments.append(ExperimentSpec(exp_name, spec))
        elif name.startswith("trackers."):
            tracker_name = name[len("trackers.") :]
            if not tracker_name:
                raise ConfigError("tracker section needs a name", file=path, key=name)
            trackers.append(_parse_tracker(section, tracker_name, path))
        else:
            raise ConfigError(
                "unknown section (expected workspace, runner, experiments.*, trackers.*)",
                file=path,
                key=name,
            )

    workspace = workspace or {
        "dataset": "dataset",
        "results": "results",
        "reports": "reports",
        "alpha": 0.05,
        "horizon": 100,
        "master_seed": 0,
    }
    names = [t.name for t in trackers]
    if len(set(names)) != len(names):
        raise ConfigError(f"duplicate tracker names: {names}", file=path)
    if not experiments:
        experiments = [ExperimentSpec("baseline")]
    if workspace["alpha"] <= 0.0 or workspace["alpha"] >= 1.0:
        raise ConfigError("alpha must lie in (0, 1)", file=path, key="workspace.alpha")
    if workspace["horizon"] < 1:
        raise ConfigError("horizon must be >= 1", file=path, key="workspace.horizon")

    return WorkspaceConfig(
        path=path,
        dataset_root=root / workspace["dataset"],
        results_root=root / workspace["results"],
        reports_root=root / workspace["reports"],
        alpha=workspace["alpha"],
        horizon=workspace["horizon"],
        master_seed=workspace["master_seed"],
        trackers=tuple(trackers),
        experiments=tuple(experiments),
        **runner,
    )
