"""Tracker communication: wire grammar, subprocess sessions, built-in trackers.

External trackers run as child processes speaking a line protocol over
stdin/stdout (UTF-8, one message per line):

    tracker -> evaluator   hello version=1          once, on startup
    tracker -> evaluator   status <region>          reply to every request
    evaluator -> tracker   initialize <path> <region>
    evaluator -> tracker   frame <path>
    evaluator -> tracker   quit

Frame paths are absolute and must not contain whitespace.  Built-in trackers
implement the same initialize/frame/quit surface in-process so the runner does
not care which kind it is driving.
"""

from __future__ import annotations

import os
import selectors
import subprocess
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import (
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
    parse_region,
    perturb_rng,
    translate_region,
)

__all__ = [
    "DEFAULT_TIMEOUT",
    "PROTOCOL_VERSION",
    "BuiltinTracker",
    "TrackerCommand",
    "Tracker",
    "builtin_tracker",
    "format_frame",
    "format_hello",
    "format_initialize",
    "format_status",
    "open_session",
    "parse_evaluator_line",
    "parse_tracker_line",
    "run_session",
]

PROTOCOL_VERSION = 1
DEFAULT_TIMEOUT = 30.0

BUILTIN_KINDS = ("static", "noisy_oracle", "drifter")


@dataclass(frozen=True)
class TrackerCommand:
    """An external tracker launched as a subprocess."""

    name: str
    argv: Tuple[str, ...]
    cwd: Optional[str] = None
    env: Optional[Tuple[Tuple[str, str], ...]] = None
    timeout: float = DEFAULT_TIMEOUT

    def __post_init__(self) -> None:
        if not self.name:
            raise ParameterError("tracker name must be non-empty")
        if not self.argv:
            raise ParameterError("tracker command must be non-empty")
        if self.timeout <= 0:
            raise ParameterError("timeout must be positive")


@dataclass(frozen=True)
class BuiltinTracker:
    """An in-process reference tracker."""

    name: str
    kind: str
    params: Tuple[Tuple[str, float], ...] = field(default_factory=tuple)

    def __post_init__(self) -> None:
        if self.kind not in BUILTIN_KINDS:
            raise ParameterError(f"unknown builtin tracker kind {self.kind!r}")
        if self.kind == "noisy_oracle":
            self.perturbation(seed=0)  # validates the amplitudes

    def param(self, key: str, default: float = 0.0) -> float:
        return dict(self.params).get(key, default)

    def has_param(self, key: str) -> bool:
        return key in dict(self.params)

    def perturbation(self, seed: int) -> PerturbationSpec:
        """Jitter spec for noisy_oracle; ``amplitude`` is shorthand for equal
        position and size amplitudes."""
        shorthand = self.param("amplitude", 0.0)
        if self.has_param("seed"):
            seed = int(self.param("seed"))
        return PerturbationSpec(
            position_amplitude=self.param("position_amplitude", shorthand),
            size_amplitude=self.param("size_amplitude", shorthand),
            rotation_amplitude=self.param("rotation_amplitude", 0.0),
            seed=seed,
        )


Tracker = Union[TrackerCommand, BuiltinTracker]


def builtin_tracker(
    kind: str, name: Optional[str] = None, **params: float
) -> BuiltinTracker:
    return BuiltinTracker(
        name=name or kind, kind=kind, params=tuple(sorted(params.items()))
    )


# --- message encoding ------------------------------------------------------


def format_hello(version: int = PROTOCOL_VERSION) -> str:
    return f"hello version={version}"


def format_status(region: Region) -> str:
    return f"status {format_region(region)}"


def _check_path(path: str) -> str:
    path = os.path.abspath(path)
    if any(ch.isspace() for ch in path):
        raise ProtocolError(f"frame path contains whitespace: {path!r}")
    return path


def format_initialize(path: str, region: Region) -> str:
    if isinstance(region, Absent):
        raise ProtocolError("cannot initialize a tracker on an absent target")
    return f"initialize {_check_path(path)} {format_region(region)}"


def format_frame(path: str) -> str:
    return f"frame {_check_path(path)}"


def parse_evaluator_line(line: str) -> Tuple:
    """Decode a message sent by the evaluator.

    Returns ("initialize", path, region), ("frame", path) or ("quit",).
    """
    parts = line.strip().split()
    if not parts:
        raise ProtocolError("empty message")
    verb = parts[0]
    if verb == "quit":
        if len(parts) != 1:
            raise ProtocolError(f"malformed quit message: {line!r}")
        return ("quit",)
    if verb == "frame":
        if len(parts) != 2:
            raise ProtocolError(f"malformed frame message: {line!r}")
        return ("frame", parts[1])
    if verb == "initialize":
        if len(parts) != 3:
            raise ProtocolError(f"malformed initialize message: {line!r}")
        try:
            region = parse_region(parts[2])
        except Exception as exc:
            raise ProtocolError(f"bad region in initialize: {exc}") from exc
        return ("initialize", parts[1], region)
    raise ProtocolError(f"unknown message verb {verb!r}")


def parse_tracker_line(line: str) -> Tuple:
    """Decode a message sent by the tracker.

    Returns ("hello", version) or ("status", region).
    """
    text = line.strip()
    if text.startswith("hello"):
        parts = text.split()
        if len(parts) != 2 or not parts[1].startswith("version="):
            raise ProtocolError(f"malformed hello: {line!r}")
        try:
            version = int(parts[1].split("=", 1)[1])
        except ValueError as exc:
            raise ProtocolError(f"malformed hello: {line!r}") from exc
        return ("hello", version)
    if text.startswith("status"):
        parts = text.split()
        if len(parts) != 2:
            raise ProtocolError(f"malformed status: {line!r}")
        try:
            region = parse_region(parts[1])
        except Exception as exc:
            raise ProtocolError(f"bad region in status: {exc}") from exc
        return ("status", region)
    raise ProtocolError(f"unknown tracker message: {line!r}")


# --- subprocess session ----------------------------------------------------


class ProcessSession:
    """A live conversation with one external tracker process.

    Any protocol violation, timeout or crash kills the child and leaves the
    session closed; the caller starts a fresh process for the next repetition.
    """

    def __init__(self, command: TrackerCommand):
        self.command = command
        self._buffer = b""
        self._closed = False
        env = dict(os.environ)
        if command.env is not None:
            env.update(dict(command.env))
        try:
            self._proc = subprocess.Popen(
                list(command.argv),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL,
                cwd=command.cwd,
                env=env,
            )
        except OSError as exc:
            raise TrackerCrashError(f"could not launch {command.name}: {exc}") from exc
        try:
            kind, version = self._read_message()
            if kind != "hello":
                raise ProtocolError(f"expected hello, got {kind!r}")
            if version != PROTOCOL_VERSION:
                raise ProtocolError(f"unsupported protocol version {version}")
        except Exception:
            self.close()
            raise

    @property
    def running(self) -> bool:
        return self._proc.poll() is None

    # -- low level I/O

    def _read_line(self) -> bytes:
        deadline = time.monotonic() + self.command.timeout
        sel = selectors.DefaultSelector()
        stdout = self._proc.stdout
        assert stdout is not None
        sel.register(stdout, selectors.EVENT_READ)
        try:
            while b"\n" not in self._buffer:
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TrackerTimeoutError(
                        f"{self.command.name} sent no reply within "
                        f"{self.command.timeout:g}s"
                    )
                if not sel.select(timeout=remaining):
                    continue
                chunk = os.read(stdout.fileno(), 4096)
                if not chunk:
                    raise TrackerCrashError(
                        f"{self.command.name} closed its output stream"
                    )
                self._buffer += chunk
        finally:
            sel.close()
        line, self._buffer = self._buffer.split(b"\n", 1)
        return line

    def _read_message(self) -> Tuple:
        raw = self._read_line()
        try:
            text = raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ProtocolError(f"undecodable tracker output: {raw!r}") from exc
        return parse_tracker_line(text)

    def _send(self, message: str) -> None:
        stdin = self._proc.stdin
        assert stdin is not None
        try:
            stdin.write(message.encode("utf-8") + b"\n")
            stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise TrackerCrashError(f"{self.command.name} pipe closed: {exc}") from exc

    def _request(self, message: str) -> Region:
        if self._closed:
            raise ProtocolError("session is closed")
        try:
            self._send(message)
            kind, payload = self._read_message()
        except Exception:
            self.close()
            raise
        if kind != "status":
            self.close()
            raise ProtocolError(f"expected status reply, got {kind!r}")
        return payload

    # -- tracker surface

    def initialize(self, path: str, region: Region) -> Region:
        return self._request(format_initialize(path, region))

    def frame(self, path: str) -> Region:
        return self._request(format_frame(path))

    def quit(self) -> None:
        if self._closed:
            return
        try:
            self._send("quit")
        except TrackerCrashError:
            pass
        try:
            self._proc.wait(timeout=2.0)
        except subprocess.TimeoutExpired:
            pass
        self.close()

    def close(self) -> None:
        self._closed = True
        if self._proc.poll() is None:
            self._proc.kill()
            try:
                self._proc.wait(timeout=5.0)
            except subprocess.TimeoutExpired:
                pass
        for stream in (self._proc.stdin, self._proc.stdout):
            if stream is not None:
                try:
                    stream.close()
                except OSError:
                    pass

    def __enter__(self) -> "ProcessSession":
        return self

    def __exit__(self, *exc_info) -> None:
        self.quit()


# --- built-in trackers -----------------------------------------------------


class _BuiltinSession:
    """Shared scaffolding for the in-process reference trackers."""

    def __init__(self, frame_index: Dict[str, int]):
        self._index = frame_index
        self._closed = False

    def _frame_number(self, path: str) -> int:
        key = os.path.abspath(path)
        if key not in self._index:
            raise ProtocolError(f"frame not part of the sequence: {path!r}")
        return self._index[key]

    def initialize(self, path: str, region: Region) -> Region:
        raise NotImplementedError

    def frame(self, path: str) -> Region:
        raise NotImplementedError

    def quit(self) -> None:
        self._closed = True

    def __enter__(self):
        return self

    def __exit__(self, *exc_info) -> None:
        self.quit()


class StaticSession(_BuiltinSession):
    """Reports the initialization region forever."""

    def __init__(self, frame_index: Dict[str, int]):
        super().__init__(frame_index)
        self._region: Optional[Region] = None

    def initialize(self, path: str, region: Region) -> Region:
        self._frame_number(path)
        self._region = region
        return region

    def frame(self, path: str) -> Region:
        self._frame_number(path)
        if self._region is None:
            raise ProtocolError("frame before initialize")
        return self._region


class NoisyOracleSession(_BuiltinSession):
    """Ground truth jittered by a region perturbation per output.

    When the target is absent the previous output is repeated.
    """

    def __init__(
        self,
        frame_index: Dict[str, int],
        groundtruth: Sequence[Region],
        spec: PerturbationSpec,
    ):
        super().__init__(frame_index)
        self._gt = list(groundtruth)
        self._spec = spec
        self._rng = np.random.default_rng(spec.seed)
        self._last: Optional[Region] = None

    def _output(self, number: int) -> Region:
        truth = self._gt[number]
        if isinstance(truth, Absent):
            if self._last is None:
                raise ProtocolError("initialized on an absent target")
            return self._last
        out = perturb_rng(truth, self._spec, self._rng)
        self._last = out
        return out

    def initialize(self, path: str, region: Region) -> Region:
        number = self._frame_number(path)
        self._last = region
        return self._output(number)

    def frame(self, path: str) -> Region:
        if self._last is None:
            raise ProtocolError("frame before initialize")
        return self._output(self._frame_number(path))


class DrifterSession(_BuiltinSession):
    """Ground truth translated by a constant per-frame velocity since init."""

    def __init__(
        self,
        frame_index: Dict[str, int],
        groundtruth: Sequence[Region],
        velocity: Tuple[float, float],
    ):
        super().__init__(frame_index)
        self._gt = list(groundtruth)
        self._velocity = velocity
        self._init_number: Optional[int] = None
        self._last: Optional[Region] = None

    def _output(self, number: int) -> Region:
        assert self._init_number is not None
        truth = self._gt[number]
        if isinstance(truth, Absent):
            if self._last is None:
                raise ProtocolError("initialized on an absent target")
            return self._last
        elapsed = number - self._init_number
        vx, vy = self._velocity
        out = translate_region(truth, vx * elapsed, vy * elapsed)
        self._last = out
        return out

    def initialize(self, path: str, region: Region) -> Region:
        number = self._frame_number(path)
        self._init_number = number
        self._last = region
        return self._output(number)

    def frame(self, path: str) -> Region:
        if self._init_number is None:
            raise ProtocolError("frame before initialize")
        return self._output(self._frame_number(path))


def _frame_index(frame_paths: Sequence[str]) -> Dict[str, int]:
    return {os.path.abspath(p): i for i, p in enumerate(frame_paths)}


def open_session(
    tracker: Tracker,
    frame_paths: Sequence[str] = (),
    groundtruth: Sequence[Region] = (),
    seed: int = 0,
):
    """Start a session for the given tracker description.

    Built-in trackers need the sequence frames (and ground truth, except for
    ``static``) to look up their answers; external commands ignore them.
    """
    if isinstance(tracker, TrackerCommand):
        return ProcessSession(tracker)
    index = _frame_index(frame_paths)
    if tracker.kind == "static":
        return StaticSession(index)
    if not groundtruth:
        raise ParameterError(f"{tracker.kind} tracker needs ground truth")
    if len(groundtruth) != len(frame_paths):
        raise ParameterError("ground truth length does not match frame count")
    if tracker.kind == "noisy_oracle":
        return NoisyOracleSession(index, groundtruth, tracker.perturbation(seed))
    return DrifterSession(
        index,
        groundtruth,
        (tracker.param("velocity_x", 1.0), tracker.param("velocity_y", 0.0)),
    )


def run_session(
    tracker: Tracker,
    init_region: Region,
    frame_paths: Sequence[str],
    groundtruth: Sequence[Region] = (),
    seed: int = 0,
) -> List[Region]:
    """Drive one uninterrupted pass: initialize on the first frame, then feed
    the rest.  Returns one region per frame, the first being the tracker's
    reply to initialization."""
    if not frame_paths:
        raise ParameterError("need at least one frame")
    session = open_session(tracker, frame_paths, groundtruth, seed)
    outputs: List[Region] = []
    try:
        outputs.append(session.initialize(frame_paths[0], init_region))
        for path in frame_paths[1:]:
            outputs.append(session.frame(path))
    finally:
        session.quit()
    return outputs
