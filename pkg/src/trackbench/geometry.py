"""Region primitives: representations, overlap, perturbation, text encoding.

Regions live in image coordinates (x right, y down, origin at the top-left
pixel corner).  Three concrete shapes plus an explicit absent marker:

* ``AxisAligned``  -- left/top corner plus width and height.
* ``Rotated``      -- center, width, height and an angle in radians.
* ``Quad``         -- four corner points; any strictly convex quadrilateral.

Overlap is the intersection-over-union of the two shapes, computed on the
exact polygons (convex clipping), never on axis-aligned approximations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from .errors import ParameterError, RegionError

__all__ = [
    "ABSENT",
    "Absent",
    "AxisAligned",
    "PerturbationSpec",
    "Quad",
    "Region",
    "Rotated",
    "format_region",
    "overlap",
    "parse_region",
    "perturb",
    "perturb_rng",
    "region_corners",
    "regions_close",
    "translate_region",
]

Point = Tuple[float, float]


def _require_finite(name: str, *values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise RegionError(f"{name} has non-finite component {v!r}")


@dataclass(frozen=True)
class Absent:
    """Marker for frames where the target is not visible at all."""

    def __repr__(self) -> str:  # keep log lines short
        return "Absent()"


ABSENT = Absent()


@dataclass(frozen=True)
class AxisAligned:
    """Axis-aligned box given by its left/top corner and size."""

    x: float
    y: float
    width: float
    height: float

    def __post_init__(self) -> None:
        _require_finite("region", self.x, self.y, self.width, self.height)
        if self.width <= 0 or self.height <= 0:
            raise RegionError(
                f"degenerate box: width={self.width!r} height={self.height!r}"
            )

    @property
    def center(self) -> Point:
        return (self.x + self.width / 2.0, self.y + self.height / 2.0)

    def corners(self) -> Tuple[Point, Point, Point, Point]:
        x, y, w, h = self.x, self.y, self.width, self.height
        return ((x, y), (x + w, y), (x + w, y + h), (x, y + h))


@dataclass(frozen=True)
class Rotated:
    """Rectangle given by center, size and rotation angle (radians).

    The angle is measured from the image x axis toward the y axis and must
    lie in (-pi, pi].
    """

    cx: float
    cy: float
    width: float
    height: float
    angle: float

    def __post_init__(self) -> None:
        _require_finite("region", self.cx, self.cy, self.width, self.height, self.angle)
        if self.width <= 0 or self.height <= 0:
            raise RegionError(
                f"degenerate box: width={self.width!r} height={self.height!r}"
            )
        if not (-math.pi < self.angle <= math.pi):
            raise RegionError(f"angle {self.angle!r} outside (-pi, pi]")

    @property
    def center(self) -> Point:
        return (self.cx, self.cy)

    def corners(self) -> Tuple[Point, Point, Point, Point]:
        c, s = math.cos(self.angle), math.sin(self.angle)
        hw, hh = self.width / 2.0, self.height / 2.0
        out = []
        for dx, dy in ((-hw, -hh), (hw, -hh), (hw, hh), (-hw, hh)):
            out.append((self.cx + c * dx - s * dy, self.cy + s * dx + c * dy))
        return tuple(out)  # type: ignore[return-value]


@dataclass(frozen=True)
class Quad:
    """Arbitrary strictly convex quadrilateral given by its four corners."""

    points: Tuple[Point, Point, Point, Point]

    def __post_init__(self) -> None:
        pts = tuple((float(px), float(py)) for px, py in self.points)
        if len(pts) != 4:
            raise RegionError(f"quad needs 4 corners, got {len(pts)}")
        for px, py in pts:
            _require_finite("quad corner", px, py)
        object.__setattr__(self, "points", pts)
        area2 = _signed_area2(pts)
        if abs(area2) < 1e-12:
            raise RegionError("degenerate quad: zero area")
        # Strict convexity: consecutive edge cross products all share one sign.
        sign = 1.0 if area2 > 0 else -1.0
        n = len(pts)
        for i in range(n):
            ax, ay = pts[i]
            bx, by = pts[(i + 1) % n]
            cx, cy = pts[(i + 2) % n]
            cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
            if cross * sign <= 0:
                raise RegionError("quad corners are not strictly convex")

    @property
    def center(self) -> Point:
        xs = [p[0] for p in self.points]
        ys = [p[1] for p in self.points]
        return (sum(xs) / 4.0, sum(ys) / 4.0)

    def corners(self) -> Tuple[Point, Point, Point, Point]:
        return self.points


Region = Union[Absent, AxisAligned, Rotated, Quad]


def region_corners(region: Region) -> Tuple[Point, ...]:
    """Corner points of a non-absent region, in stored order."""
    if isinstance(region, Absent):
        raise RegionError("absent region has no corners")
    return region.corners()


def _signed_area2(pts: Sequence[Point]) -> float:
    # Twice the shoelace area, sign encodes winding.
    total = 0.0
    n = len(pts)
    for i in range(n):
        x1, y1 = pts[i]
        x2, y2 = pts[(i + 1) % n]
        total += x1 * y2 - x2 * y1
    return total


def _polygon_area(pts: Sequence[Point]) -> float:
    return abs(_signed_area2(pts)) / 2.0


def _ccw(pts: Sequence[Point]) -> Tuple[Point, ...]:
    # Normalize winding so the clipping edge test has a fixed orientation.
    if _signed_area2(pts) < 0:
        return tuple(reversed(pts))
    return tuple(pts)


def _clip_convex(subject: Sequence[Point], clip: Sequence[Point]) -> Tuple[Point, ...]:
    """Clip one convex polygon by another (Sutherland-Hodgman)."""
    output = list(subject)
    n = len(clip)
    for i in range(n):
        if not output:
            break
        ex1, ey1 = clip[i]
        ex2, ey2 = clip[(i + 1) % n]
        edx, edy = ex2 - ex1, ey2 - ey1
        inputs = output
        output = []
        prev = inputs[-1]
        prev_side = edx * (prev[1] - ey1) - edy * (prev[0] - ex1)
        for cur in inputs:
            cur_side = edx * (cur[1] - ey1) - edy * (cur[0] - ex1)
            if cur_side >= 0:  # inside a CCW clip polygon, boundary included
                if prev_side < 0:
                    output.append(_edge_intersection(prev, cur, (ex1, ey1), (ex2, ey2)))
                output.append(cur)
            elif prev_side >= 0:
                output.append(_edge_intersection(prev, cur, (ex1, ey1), (ex2, ey2)))
            prev, prev_side = cur, cur_side
    return tuple(output)


def _edge_intersection(p1: Point, p2: Point, q1: Point, q2: Point) -> Point:
    sx, sy = p2[0] - p1[0], p2[1] - p1[1]
    qx, qy = q2[0] - q1[0], q2[1] - q1[1]
    denom = sx * qy - sy * qx
    if denom == 0.0:
        return p2
    t = ((q1[0] - p1[0]) * qy - (q1[1] - p1[1]) * qx) / denom
    return (p1[0] + t * sx, p1[1] + t * sy)


def _aligned_intersection(a: AxisAligned, b: AxisAligned) -> float:
    iw = min(a.x + a.width, b.x + b.width) - max(a.x, b.x)
    ih = min(a.y + a.height, b.y + b.height) - max(a.y, b.y)
    if iw <= 0 or ih <= 0:
        return 0.0
    return iw * ih


def overlap(a: Region, b: Region) -> float:
    """Intersection-over-union of two regions.

    Absent regions overlap nothing, including each other.  Touching but
    non-overlapping shapes score exactly 0; identical shapes score exactly 1.
    """
    if isinstance(a, Absent) or isinstance(b, Absent):
        return 0.0
    if a == b:
        # Short-circuit keeps identity exact even where x + width rounds.
        return 1.0
    if isinstance(a, AxisAligned) and isinstance(b, AxisAligned):
        inter = _aligned_intersection(a, b)
        if inter == 0.0:
            return 0.0
        union = a.width * a.height + b.width * b.height - inter
        return inter / union
    pa = _ccw(a.corners())
    pb = _ccw(b.corners())
    area_a = _polygon_area(pa)
    area_b = _polygon_area(pb)
    clipped = _clip_convex(pa, pb)
    inter = _polygon_area(clipped) if len(clipped) >= 3 else 0.0
    if inter <= 0.0:
        return 0.0
    union = area_a + area_b - inter
    if inter >= union:  # identical shapes up to rounding
        return 1.0
    return inter / union


# --- text encoding ---------------------------------------------------------

_ABSENT_TOKEN = "absent"


def _fmt(v: float) -> str:
    s = f"{v:.4f}"
    return "0.0000" if s == "-0.0000" else s


def format_region(region: Region) -> str:
    """Serialize a region to its canonical text form.

    Axis-aligned boxes use ``x,y,w,h``; rotated boxes and quads use the
    eight corner coordinates in clockwise order.  All numbers carry exactly
    four fractional digits.  Absent serializes to the literal ``absent``.
    """
    if isinstance(region, Absent):
        return _ABSENT_TOKEN
    if isinstance(region, AxisAligned):
        return ",".join(_fmt(v) for v in (region.x, region.y, region.width, region.height))
    pts = region.corners()
    return ",".join(_fmt(v) for p in pts for v in p)


def parse_region(text: str) -> Region:
    """Parse the text form produced by :func:`format_region`.

    Four numbers make an axis-aligned box, eight numbers a convex quad.
    Anything else raises :class:`RegionError`.
    """
    body = text.strip()
    if body == _ABSENT_TOKEN:
        return ABSENT
    parts = body.split(",")
    try:
        values = [float(p) for p in parts]
    except ValueError as exc:
        raise RegionError(f"unparseable region {text!r}") from exc
    for v in values:
        if not math.isfinite(v):
            raise RegionError(f"non-finite value in region {text!r}")
    if len(values) == 4:
        x, y, w, h = values
        return AxisAligned(x, y, w, h)
    if len(values) == 8:
        pts = tuple((values[i], values[i + 1]) for i in range(0, 8, 2))
        return Quad(pts)  # type: ignore[arg-type]
    raise RegionError(f"region needs 4 or 8 numbers, got {len(values)}: {text!r}")


def translate_region(region: Region, dx: float, dy: float) -> Region:
    """Shift a region by (dx, dy); absent stays absent."""
    if isinstance(region, Absent):
        return region
    if isinstance(region, AxisAligned):
        return AxisAligned(region.x + dx, region.y + dy, region.width, region.height)
    if isinstance(region, Rotated):
        return Rotated(
            region.cx + dx, region.cy + dy, region.width, region.height, region.angle
        )
    return Quad(tuple((x + dx, y + dy) for x, y in region.points))


def regions_close(a: Region, b: Region, tol: float = 5e-4) -> bool:
    """Geometric near-equality: corner sets match within ``tol``."""
    if isinstance(a, Absent) or isinstance(b, Absent):
        return isinstance(a, Absent) and isinstance(b, Absent)
    ca, cb = a.corners(), b.corners()
    return all(
        abs(p[0] - q[0]) <= tol and abs(p[1] - q[1]) <= tol for p, q in zip(ca, cb)
    )


# --- perturbation ----------------------------------------------------------


@dataclass(frozen=True)
class PerturbationSpec:
    """Random disturbance applied to a region at initialization time.

    Amplitudes are relative: position offsets are drawn uniformly within
    +/- ``position_amplitude`` of the box width/height, size factors within
    +/- ``size_amplitude`` of 1, and the rotation offset uniformly within
    +/- ``rotation_amplitude`` radians.
    """

    position_amplitude: float = 0.0
    size_amplitude: float = 0.0
    rotation_amplitude: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("position_amplitude", "size_amplitude", "rotation_amplitude"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be finite and >= 0, got {v!r}")
        if self.size_amplitude >= 1.0:
            raise ParameterError("size_amplitude must stay below 1 to keep boxes valid")
        if self.rotation_amplitude >= math.pi:
            raise ParameterError("rotation_amplitude must stay below pi")


def _wrap_angle(theta: float) -> float:
    wrapped = (theta + math.pi) % (2.0 * math.pi) - math.pi
    if wrapped <= -math.pi:
        wrapped = math.pi
    return wrapped


def _oriented_params(region: Union[AxisAligned, Rotated, Quad]):
    if isinstance(region, AxisAligned):
        cx, cy = region.center
        return cx, cy, region.width, region.height, 0.0
    if isinstance(region, Rotated):
        return region.cx, region.cy, region.width, region.height, region.angle
    # General quad: recover an oriented-rectangle description from the
    # corners; exact for rectangles, a fair approximation otherwise.
    p = region.points
    cx, cy = region.center
    w = (math.dist(p[0], p[1]) + math.dist(p[3], p[2])) / 2.0
    h = (math.dist(p[1], p[2]) + math.dist(p[0], p[3])) / 2.0
    theta = math.atan2(p[1][1] - p[0][1], p[1][0] - p[0][0])
    return cx, cy, w, h, _wrap_angle(theta)


def perturb_rng(region: Region, spec: PerturbationSpec, rng: np.random.Generator) -> Region:
    """Like :func:`perturb` but consuming draws from a caller-owned generator.

    Always consumes exactly five uniform draws so call sequences stay aligned
    regardless of amplitudes.
    """
    if isinstance(region, Absent):
        raise RegionError("cannot perturb an absent region")
    pa, sa, ra = spec.position_amplitude, spec.size_amplitude, spec.rotation_amplitude
    ux = rng.uniform(-1.0, 1.0)
    uy = rng.uniform(-1.0, 1.0)
    uw = rng.uniform(-1.0, 1.0)
    uh = rng.uniform(-1.0, 1.0)
    ut = rng.uniform(-1.0, 1.0)
    if pa == 0.0 and sa == 0.0 and ra == 0.0:
        return region
    cx, cy, w, h, theta = _oriented_params(region)
    cx += ux * pa * w
    cy += uy * pa * h
    w *= 1.0 + uw * sa
    h *= 1.0 + uh * sa
    dtheta = ut * ra
    if isinstance(region, AxisAligned) and dtheta == 0.0:
        return AxisAligned(cx - w / 2.0, cy - h / 2.0, w, h)
    return Rotated(cx, cy, w, h, _wrap_angle(theta + dtheta))


def perturb(region: Region, spec: PerturbationSpec) -> Region:
    """Apply one random disturbance to ``region``, deterministic in ``spec.seed``."""
    rng = np.random.default_rng(spec.seed)
    return perturb_rng(region, spec, rng)
