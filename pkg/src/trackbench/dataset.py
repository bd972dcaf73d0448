"""Sequence storage: on-disk layout, annotation noise, synthetic sequences.

A sequence directory looks like::

    <name>/
        frames/00000001.ppm ...     binary P6 (or P5) frames, numbered from 1
        groundtruth.txt             one region or ``absent`` per line
        attributes/<channel>.tag    optional, one 0/1 per line
        gamma.txt                   optional, one number (annotation noise)

Five attribute channels are stored; the neutral channel is derived (a frame
is neutral exactly when all stored channels are clear) and never written.
"""

from __future__ import annotations

import math
import re
import shutil
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .errors import FormatError, ParameterError
from .geometry import (
    ABSENT,
    Absent,
    AxisAligned,
    Region,
    format_region,
    parse_region,
)
from .images import write_image

__all__ = [
    "CHANNELS",
    "STORED_CHANNELS",
    "GammaEstimate",
    "SequenceRecord",
    "SynthEvent",
    "SynthScript",
    "estimate_gamma",
    "gamma_sample_count",
    "linear_path",
    "load_dataset",
    "load_sequence",
    "synthesize",
    "write_sequence",
]

STORED_CHANNELS: Tuple[str, ...] = (
    "camera_motion",
    "illumination_change",
    "occlusion",
    "size_change",
    "motion_change",
)
CHANNELS: Tuple[str, ...] = STORED_CHANNELS + ("neutral",)

_FRAME_RE = re.compile(r"^\d{8}\.(ppm|pgm)$")


@dataclass
class SequenceRecord:
    """In-memory view of one sequence."""

    name: str
    frames: List[Path]
    groundtruth: List[Region]
    tags: Dict[str, List[int]] = field(default_factory=dict)
    gamma: float = 0.0

    def __post_init__(self) -> None:
        n = len(self.frames)
        if len(self.groundtruth) != n:
            raise ParameterError(
                f"{self.name}: {n} frames but {len(self.groundtruth)} groundtruth lines"
            )
        for channel in STORED_CHANNELS:
            values = self.tags.setdefault(channel, [0] * n)
            if len(values) != n:
                raise ParameterError(
                    f"{self.name}: channel {channel} has {len(values)} entries for {n} frames"
                )
            for v in values:
                if v not in (0, 1):
                    raise ParameterError(f"{self.name}: tag values must be 0/1, got {v!r}")
        unknown = set(self.tags) - set(STORED_CHANNELS)
        if unknown:
            raise ParameterError(f"{self.name}: unknown channels {sorted(unknown)}")
        if not (0.0 <= self.gamma <= 1.0) or not math.isfinite(self.gamma):
            raise ParameterError(f"{self.name}: gamma {self.gamma!r} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.frames)

    def channel(self, name: str) -> List[int]:
        """Per-frame 0/1 flags for a channel, including the derived neutral."""
        if name == "neutral":
            return [
                1 if all(self.tags[c][t] == 0 for c in STORED_CHANNELS) else 0
                for t in range(len(self))
            ]
        if name not in STORED_CHANNELS:
            raise ParameterError(f"unknown channel {name!r}")
        return list(self.tags[name])


def load_sequence(path: Union[str, Path]) -> SequenceRecord:
    root = Path(path)
    if not root.is_dir():
        raise FormatError("sequence directory not found", file=root)
    frames_dir = root / "frames"
    if not frames_dir.is_dir():
        raise FormatError("missing frames/ directory", file=root)
    frames = sorted(p for p in frames_dir.iterdir() if p.is_file())
    for p in frames:
        if not _FRAME_RE.match(p.name):
            raise FormatError(f"unexpected frame file name {p.name!r}", file=frames_dir)
    frames = [p.resolve() for p in frames]
    if not frames:
        raise FormatError("no frames", file=frames_dir)

    gt_file = root / "groundtruth.txt"
    if not gt_file.is_file():
        raise FormatError("missing groundtruth.txt", file=root)
    groundtruth: List[Region] = []
    for i, line in enumerate(gt_file.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            raise FormatError("blank groundtruth line", file=gt_file, line=i)
        try:
            groundtruth.append(parse_region(line))
        except Exception as exc:
            raise FormatError(f"bad region: {exc}", file=gt_file, line=i) from exc
    if len(groundtruth) != len(frames):
        raise FormatError(
            f"{len(groundtruth)} groundtruth lines for {len(frames)} frames", file=gt_file
        )

    tags: Dict[str, List[int]] = {}
    attr_dir = root / "attributes"
    if attr_dir.is_dir():
        for tag_file in sorted(attr_dir.glob("*.tag")):
            channel = tag_file.stem
            if channel == "neutral":
                raise FormatError("neutral channel is derived, never stored", file=tag_file)
            if channel not in STORED_CHANNELS:
                raise FormatError(f"unknown attribute channel {channel!r}", file=tag_file)
            values: List[int] = []
            for i, line in enumerate(tag_file.read_text(encoding="utf-8").splitlines(), 1):
                token = line.strip()
                if token not in ("0", "1"):
                    raise FormatError(f"tag lines must be 0 or 1, got {token!r}",
                                      file=tag_file, line=i)
                values.append(int(token))
            if len(values) != len(frames):
                raise FormatError(
                    f"{len(values)} tag lines for {len(frames)} frames", file=tag_file
                )
            tags[channel] = values

    gamma = 0.0
    gamma_file = root / "gamma.txt"
    if gamma_file.is_file():
        text = gamma_file.read_text(encoding="utf-8").strip()
        try:
            gamma = float(text)
        except ValueError as exc:
            raise FormatError(f"bad gamma value {text!r}", file=gamma_file, line=1) from exc
        if not (0.0 <= gamma <= 1.0):
            raise FormatError(f"gamma {gamma} outside [0, 1]", file=gamma_file, line=1)

    return SequenceRecord(root.name, frames, groundtruth, tags, gamma)


def write_sequence(record: SequenceRecord, out_dir: Union[str, Path],
                   copy_frames: bool = True) -> Path:
    """Write a record's text files (and optionally its frames) under ``out_dir``."""
    root = Path(out_dir)
    root.mkdir(parents=True, exist_ok=True)
    if copy_frames:
        frames_dir = root / "frames"
        frames_dir.mkdir(exist_ok=True)
        for src in record.frames:
            dst = frames_dir / src.name
            if src.resolve() != dst.resolve():
                shutil.copyfile(src, dst)
    (root / "groundtruth.txt").write_text(
        "".join(format_region(r) + "\n" for r in record.groundtruth), encoding="utf-8"
    )
    attr_dir = root / "attributes"
    attr_dir.mkdir(exist_ok=True)
    for channel in STORED_CHANNELS:
        (attr_dir / f"{channel}.tag").write_text(
            "".join(f"{v}\n" for v in record.tags[channel]), encoding="utf-8"
        )
    (root / "gamma.txt").write_text(f"{record.gamma:.6f}\n", encoding="utf-8")
    return root


def load_dataset(root: Union[str, Path]) -> Dict[str, SequenceRecord]:
    """Load every sequence directory under ``root``, sorted by name."""
    root = Path(root)
    if not root.is_dir():
        raise FormatError("dataset root not found", file=root)
    out: Dict[str, SequenceRecord] = {}
    for child in sorted(root.iterdir()):
        if child.is_dir():
            out[child.name] = load_sequence(child)
    if not out:
        raise FormatError("dataset root contains no sequences", file=root)
    return out


# --- annotation noise ------------------------------------------------------


@dataclass(frozen=True)
class GammaEstimate:
    value: float
    samples: int


def gamma_sample_count(n_frames: int, n_boxes: int) -> int:
    """Number of difference samples the estimate is built from."""
    return n_frames * n_boxes * (n_boxes - 1) * (n_boxes - 2) // 2


def estimate_gamma(per_frame_boxes: Sequence[Sequence[Region]],
                   overlap_fn=None) -> GammaEstimate:
    """Estimate annotation noise from repeated manual annotations.

    ``per_frame_boxes`` holds, for each annotated frame, the same number of
    candidate boxes (annotators times repeats).  Each box in turn plays the
    reference role; the absolute differences between the overlaps of all
    remaining pairs against that reference are pooled and averaged.
    """
    from .geometry import overlap as default_overlap

    ov = overlap_fn or default_overlap
    if not per_frame_boxes:
        raise ParameterError("no annotated frames given")
    n = len(per_frame_boxes[0])
    for boxes in per_frame_boxes:
        if len(boxes) != n:
            raise ParameterError("all frames must carry the same number of boxes")
        for b in boxes:
            if isinstance(b, Absent):
                raise ParameterError("annotation boxes cannot be absent")
    if n < 3:
        raise ParameterError(f"need at least 3 boxes per frame, got {n}")

    total = 0.0
    count = 0
    for boxes in per_frame_boxes:
        pair = np.zeros((n, n))
        for i in range(n):
            for j in range(i + 1, n):
                pair[i, j] = pair[j, i] = ov(boxes[i], boxes[j])
        for g in range(n):
            rest = np.delete(pair[g], g)
            diffs = np.abs(rest[:, None] - rest[None, :])
            iu = np.triu_indices(n - 1, k=1)
            total += float(diffs[iu].sum())
            count += len(iu[0])
    expected = gamma_sample_count(len(per_frame_boxes), n)
    assert count == expected, (count, expected)
    return GammaEstimate(total / count, count)


# --- synthetic sequences ---------------------------------------------------


@dataclass(frozen=True)
class SynthEvent:
    """A scripted disturbance over the frame interval [start, end)."""

    kind: str  # occlude | brighten | shift_camera | deform
    start: int
    end: int
    magnitude: float = 1.0

    def __post_init__(self) -> None:
        if self.kind not in ("occlude", "brighten", "shift_camera", "deform"):
            raise ParameterError(f"unknown event kind {self.kind!r}")
        if self.start < 0 or self.end <= self.start:
            raise ParameterError(f"bad event interval [{self.start}, {self.end})")

    def covers(self, t: int) -> bool:
        return self.start <= t < self.end


@dataclass
class SynthScript:
    """Full description of one synthetic sequence."""

    name: str
    length: int
    path: List[Region]
    canvas: Tuple[int, int] = (160, 120)  # (width, height)
    events: List[SynthEvent] = field(default_factory=list)
    seed: int = 0
    gamma: float = 0.05

    def __post_init__(self) -> None:
        if self.length < 1:
            raise ParameterError("script length must be >= 1")
        if len(self.path) != self.length:
            raise ParameterError(
                f"path has {len(self.path)} entries for length {self.length}"
            )
        for ev in self.events:
            if ev.end > self.length:
                raise ParameterError(f"event {ev.kind} extends past the sequence")


def linear_path(start: Tuple[float, float], size: Tuple[float, float],
                velocity: Tuple[float, float], length: int) -> List[Region]:
    """Integer-snapped straight-line target path (left/top anchored)."""
    out: List[Region] = []
    for t in range(length):
        x = round(start[0] + velocity[0] * t)
        y = round(start[1] + velocity[1] * t)
        out.append(AxisAligned(float(x), float(y), float(size[0]), float(size[1])))
    return out


def _event_channel(kind: str) -> Optional[str]:
    return {
        "occlude": "occlusion",
        "brighten": "illumination_change",
        "shift_camera": "camera_motion",
        "deform": "size_change",
    }.get(kind)


def synthesize(script: SynthScript, out_dir: Union[str, Path]) -> SequenceRecord:
    """Render a scripted sequence to ``out_dir`` and return its record.

    Rendering is fully deterministic in ``script.seed``.  The target is a
    textured patch anchored to integer pixel positions so template trackers
    can match it exactly; events disturb lighting, the camera, target size,
    or visibility, and set the matching attribute channel.
    """
    rng = np.random.default_rng(script.seed)
    w, h = script.canvas
    length = script.length

    # Camera pan: per-frame horizontal offset accumulated over shift events.
    cam = np.zeros(length)
    for t in range(1, length):
        step = sum(ev.magnitude for ev in script.events
                   if ev.kind == "shift_camera" and ev.covers(t))
        cam[t] = cam[t - 1] + step
    max_cam = int(math.ceil(cam.max())) if length else 0

    # Deform: per-frame size scale, ramping linearly across each interval.
    scale = np.ones(length)
    for ev in script.events:
        if ev.kind != "deform":
            continue
        span = max(ev.end - ev.start - 1, 1)
        for t in range(ev.start, ev.end):
            phase = (t - ev.start) / span
            scale[t] *= 1.0 + ev.magnitude * phase

    background = rng.integers(40, 110, size=(h + 4, w + max_cam + 4), dtype=np.uint8)
    base_w = max(
        int(r.width) for r in script.path if not isinstance(r, Absent)
    ) if any(not isinstance(r, Absent) for r in script.path) else 8
    base_h = max(
        int(r.height) for r in script.path if not isinstance(r, Absent)
    ) if any(not isinstance(r, Absent) for r in script.path) else 8
    texture = rng.integers(150, 255, size=(base_h, base_w), dtype=np.uint8)
    occ_texture = rng.integers(0, 35, size=(h, w), dtype=np.uint8)
    # Mild fixed channel gains make the frames genuinely colored.
    gains = np.array([1.0, 0.85, 0.7])

    root = Path(out_dir)
    frames_dir = root / "frames"
    frames_dir.mkdir(parents=True, exist_ok=True)

    frames: List[Path] = []
    groundtruth: List[Region] = []
    tags: Dict[str, List[int]] = {c: [0] * length for c in STORED_CHANNELS}

    for t in range(length):
        off = int(round(cam[t]))
        gray = background[2 : 2 + h, 2 + off : 2 + off + w].copy()

        region = script.path[t]
        if isinstance(region, Absent):
            groundtruth.append(ABSENT)
            tags["occlusion"][t] = 1
        else:
            tw = max(int(round(region.width * scale[t])), 2)
            th = max(int(round(region.height * scale[t])), 2)
            x = int(round(region.x - off))
            y = int(round(region.y))
            patch = texture[
                (np.arange(th) * texture.shape[0] // th)[:, None],
                (np.arange(tw) * texture.shape[1] // tw)[None, :],
            ]
            _blit(gray, patch, x, y)
            groundtruth.append(AxisAligned(float(x), float(y), float(tw), float(th)))
            for ev in script.events:
                if ev.kind == "occlude" and ev.covers(t):
                    cover_h = int(round(th * min(ev.magnitude, 1.0)))
                    if cover_h > 0:
                        _blit(gray, occ_texture[:cover_h, :tw], x, y)

        brighten = sum(ev.magnitude for ev in script.events
                       if ev.kind == "brighten" and ev.covers(t))
        if brighten:
            gray = np.clip(gray.astype(np.int32) + int(brighten), 0, 255).astype(np.uint8)

        for ev in script.events:
            channel = _event_channel(ev.kind)
            if channel and ev.covers(t):
                tags[channel][t] = 1

        rgb = np.clip(gray[..., None] * gains[None, None, :], 0, 255).astype(np.uint8)
        frame_path = frames_dir / f"{t + 1:08d}.ppm"
        write_image(frame_path, rgb)
        frames.append(frame_path.resolve())

    record = SequenceRecord(script.name, frames, groundtruth, tags, script.gamma)
    write_sequence(record, root, copy_frames=False)
    return load_sequence(root)


def _blit(canvas: np.ndarray, patch: np.ndarray, x: int, y: int) -> None:
    h, w = canvas.shape[:2]
    ph, pw = patch.shape[:2]
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + pw, w), min(y + ph, h)
    if x0 >= x1 or y0 >= y1:
        return
    canvas[y0:y1, x0:x1] = patch[y0 - y : y1 - y, x0 - x : x1 - x]
