"""Per-sequence content descriptors and exemplar-based sequence grouping.

Ten scalar descriptors summarise how a sequence behaves visually: how much
the target brightens, grows, moves and deforms, how cluttered and complex
the scene is, and how much the camera itself moves.  Sequences described
this way can be clustered so that a compact, diverse subset is easy to
pick from a large pool.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .dataset import SequenceRecord
from .errors import ContractError, ParameterError, RegionError
from .geometry import Absent, Region, region_corners
from .images import read_image, to_grayscale

__all__ = [
    "ATTRIBUTE_NAMES",
    "AttributeVector",
    "ClusterResult",
    "affinity_propagation",
    "compute_attributes",
    "select_dataset",
    "write_attributes_csv",
]

ATTRIBUTE_NAMES = (
    "illumination_change",
    "size_change",
    "object_motion",
    "clutter",
    "camera_motion",
    "blur",
    "aspect_ratio_change",
    "color_change",
    "deformation",
    "scene_complexity",
)

_MIN_FRAMES = 16
_SIZE_WINDOW = 15
_HIST_BINS = 16
_RING_SCALE = 1.5
_GRID = 8
_CORNER_COUNT = 200
_PATCH_HALF = 4  # 9x9 patches
_SEARCH_RADIUS = 12
_RANSAC_ROUNDS = 200
_RANSAC_INLIER = 2.0
_STABLE_ROUNDS = 50


@dataclass(frozen=True)
class AttributeVector:
    """Ten content descriptors of one sequence, each in its own units.

    ``blur`` is a negated spectral entropy and is therefore non-positive;
    the other descriptors are non-negative by construction.
    """

    illumination_change: float
    size_change: float
    object_motion: float
    clutter: float
    camera_motion: float
    blur: float
    aspect_ratio_change: float
    color_change: float
    deformation: float
    scene_complexity: float

    def __post_init__(self) -> None:
        for name in ATTRIBUTE_NAMES:
            value = getattr(self, name)
            if not math.isfinite(value):
                raise ParameterError(f"{name} must be finite, got {value!r}")

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, n) for n in ATTRIBUTE_NAMES], dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> "AttributeVector":
        arr = np.asarray(values, dtype=float)
        if arr.shape != (len(ATTRIBUTE_NAMES),):
            raise ParameterError(f"expected {len(ATTRIBUTE_NAMES)} values, got {arr.shape}")
        return cls(**{n: float(v) for n, v in zip(ATTRIBUTE_NAMES, arr)})


@dataclass(frozen=True)
class ClusterResult:
    """Outcome of one clustering run.

    ``assignments[i]`` is the index of the exemplar serving point ``i``;
    exemplars serve themselves.
    """

    assignments: Tuple[int, ...]
    exemplars: Tuple[int, ...]
    iterations: int
    converged: bool

    def __post_init__(self) -> None:
        n = len(self.assignments)
        if not self.exemplars:
            raise ContractError("cluster result without exemplars")
        if list(self.exemplars) != sorted(set(self.exemplars)):
            raise ContractError("exemplars must be sorted and unique")
        for e in self.exemplars:
            if not (0 <= e < n):
                raise ContractError(f"exemplar {e} outside 0..{n - 1}")
            if self.assignments[e] != e:
                raise ContractError(f"exemplar {e} not assigned to itself")
        targets = set(self.assignments)
        if not targets <= set(self.exemplars):
            raise ContractError(f"assignments point at non-exemplars: {sorted(targets)}")


# ---------------------------------------------------------------------------
# region helpers


def _bounds(region: Region) -> Tuple[float, float, float, float]:
    xs, ys = zip(*region_corners(region))
    return min(xs), min(ys), max(xs), max(ys)


def _center(region: Region) -> Tuple[float, float]:
    pts = region_corners(region)
    return (
        sum(p[0] for p in pts) / len(pts),
        sum(p[1] for p in pts) / len(pts),
    )


def _pixel_slices(
    bounds: Tuple[float, float, float, float], shape: Tuple[int, int]
) -> Optional[Tuple[slice, slice]]:
    """Pixel index ranges covered by a bounding box, clipped to the image."""
    h, w = shape
    x0, y0, x1, y1 = bounds
    c0 = max(0, int(math.floor(x0)))
    c1 = min(w, int(math.ceil(x1)))
    r0 = max(0, int(math.floor(y0)))
    r1 = min(h, int(math.ceil(y1)))
    if c0 >= c1 or r0 >= r1:
        return None
    return slice(r0, r1), slice(c0, c1)


def _enlarged(bounds: Tuple[float, float, float, float]) -> Tuple[float, float, float, float]:
    x0, y0, x1, y1 = bounds
    cx, cy = (x0 + x1) / 2.0, (y0 + y1) / 2.0
    hx, hy = _RING_SCALE * (x1 - x0) / 2.0, _RING_SCALE * (y1 - y0) / 2.0
    return cx - hx, cy - hy, cx + hx, cy + hy


# ---------------------------------------------------------------------------
# per-frame measurements


def _channels(image: np.ndarray) -> List[np.ndarray]:
    if image.ndim == 2:
        return [image]
    return [image[..., c] for c in range(image.shape[2])]


def _hist16(values: np.ndarray) -> np.ndarray:
    counts = np.bincount(values.astype(np.int64) >> 4, minlength=_HIST_BINS).astype(float)
    total = counts.sum()
    return counts / total if total > 0 else counts


def _ring_distance(image: np.ndarray, bounds, shape) -> Optional[float]:
    """L1 distance between inside-box and surrounding-ring histograms."""
    inner = _pixel_slices(bounds, shape)
    outer = _pixel_slices(_enlarged(bounds), shape)
    if inner is None or outer is None:
        return None
    mask = np.zeros(shape, dtype=bool)
    mask[outer] = True
    mask[inner] = False
    if not mask.any():
        return None
    total = 0.0
    for plane in _channels(image):
        total += float(
            np.abs(_hist16(plane[inner].ravel()) - _hist16(plane[mask])).sum()
        )
    return total


def _hue_mean(image: np.ndarray, window: Tuple[slice, slice]) -> float:
    """Average hue angle (degrees) inside a pixel window; gray pixels count as 0."""
    if image.ndim == 2:
        return 0.0
    rgb = image[window].reshape(-1, 3).astype(np.float64)
    r, g, b = rgb[:, 0], rgb[:, 1], rgb[:, 2]
    mx = rgb.max(axis=1)
    c = mx - rgb.min(axis=1)
    safe = np.where(c > 0, c, 1.0)
    hue = np.where(
        c == 0,
        0.0,
        np.where(
            mx == r,
            60.0 * (((g - b) / safe) % 6.0),
            np.where(mx == g, 60.0 * ((b - r) / safe + 2.0), 60.0 * ((r - g) / safe + 4.0)),
        ),
    )
    return float(hue.mean())


def _cell_means(gray: np.ndarray) -> np.ndarray:
    h, w = gray.shape
    rows = np.linspace(0, h, _GRID + 1).astype(int)
    cols = np.linspace(0, w, _GRID + 1).astype(int)
    out = np.zeros((_GRID, _GRID))
    for i in range(_GRID):
        for j in range(_GRID):
            cell = gray[rows[i] : rows[i + 1], cols[j] : cols[j + 1]]
            if cell.size:
                out[i, j] = cell.mean()
    return out


def _spectral_negentropy(gray: np.ndarray) -> float:
    # Sharp frames spread energy across frequencies; blur concentrates it,
    # so lower entropy (a higher score here) indicates a blurrier frame.
    magnitude = np.abs(np.fft.fft2(gray))
    total = magnitude.sum()
    if total <= 0:
        return 0.0
    p = magnitude / total
    p = p[p > 0]
    return float((p * np.log(p)).sum())


def _value_entropy(gray: np.ndarray) -> float:
    values = np.clip(np.rint(gray), 0, 255).astype(np.int64)
    counts = np.bincount(values.ravel(), minlength=256)
    nonzero = counts[counts > 0].astype(float)
    return float((nonzero * np.log(nonzero)).sum())


# ---------------------------------------------------------------------------
# camera motion


def _box3(a: np.ndarray) -> np.ndarray:
    p = np.pad(a, 1, mode="edge")
    out = np.zeros_like(a)
    for dy in range(3):
        for dx in range(3):
            out += p[dy : dy + a.shape[0], dx : dx + a.shape[1]]
    return out / 9.0


def _harris_corners(gray: np.ndarray) -> np.ndarray:
    """Strongest corner locations as (row, col) pairs, away from the borders."""
    gy, gx = np.gradient(gray)
    sxx = _box3(gx * gx)
    syy = _box3(gy * gy)
    sxy = _box3(gx * gy)
    response = sxx * syy - sxy * sxy - 0.04 * (sxx + syy) ** 2

    peak = response.copy()
    p = np.pad(response, 1, mode="constant", constant_values=-np.inf)
    for dy in range(3):
        for dx in range(3):
            if dy == 1 and dx == 1:
                continue
            shifted = p[dy : dy + gray.shape[0], dx : dx + gray.shape[1]]
            peak = np.where(shifted > peak, -np.inf, peak)

    margin = _PATCH_HALF + _SEARCH_RADIUS + 1
    keep = np.full(gray.shape, False)
    if gray.shape[0] > 2 * margin and gray.shape[1] > 2 * margin:
        keep[margin:-margin, margin:-margin] = True
    candidates = np.argwhere(keep & np.isfinite(peak) & (response > 0))
    if candidates.size == 0:
        return candidates.reshape(0, 2)
    strength = response[candidates[:, 0], candidates[:, 1]]
    order = np.argsort(-strength, kind="stable")[:_CORNER_COUNT]
    return candidates[order]


def _match_displacements(prev: np.ndarray, cur: np.ndarray, corners: np.ndarray) -> np.ndarray:
    half, radius = _PATCH_HALF, _SEARCH_RADIUS
    side = 2 * half + 1
    out = []
    for y, x in corners:
        ref = prev[y - half : y + half + 1, x - half : x + half + 1]
        area = cur[y - radius - half : y + radius + half + 1, x - radius - half : x + radius + half + 1]
        windows = np.lib.stride_tricks.sliding_window_view(area, (side, side))
        ssd = ((windows - ref) ** 2).sum(axis=(2, 3))
        best = np.argwhere(ssd == ssd.min()) - radius
        # Featureless patches tie everywhere; prefer the smallest shift.
        norms = (best ** 2).sum(axis=1)
        dy, dx = best[np.argmin(norms)]
        out.append((float(dy), float(dx)))
    return np.array(out, dtype=float).reshape(-1, 2)


def _pair_translation(
    prev: np.ndarray, cur: np.ndarray, corners: np.ndarray, rng: np.random.Generator
) -> float:
    if prev.shape != cur.shape or len(corners) == 0:
        return 0.0
    disp = _match_displacements(prev, cur, corners)
    best_mask = None
    best_count = -1
    for _ in range(_RANSAC_ROUNDS):
        candidate = disp[rng.integers(len(disp))]
        err = np.hypot(*(disp - candidate).T)
        mask = err <= _RANSAC_INLIER
        count = int(mask.sum())
        if count > best_count:
            best_count, best_mask = count, mask
    model = disp[best_mask].mean(axis=0)
    return float(np.hypot(model[0], model[1]))


# ---------------------------------------------------------------------------
# the descriptor pass


def compute_attributes(seq: SequenceRecord, seed: int = 0) -> AttributeVector:
    """Measure the ten descriptors of one sequence.

    Frames are read once, in order, holding at most two frames in memory.
    Frames whose groundtruth is absent are skipped by the target-dependent
    descriptors; comparisons never straddle an absent frame.  The seed
    drives only the consensus step of the camera-motion estimate.
    """
    n = len(seq)
    if n < _MIN_FRAMES:
        raise ParameterError(f"{seq.name}: needs at least {_MIN_FRAMES} frames, got {n}")
    present = [not isinstance(g, Absent) for g in seq.groundtruth]
    if not any(present):
        raise RegionError(f"{seq.name}: groundtruth is absent on every frame")

    rng = np.random.default_rng(seed)

    illum_ref: Optional[float] = None
    ratio_ref: Optional[float] = None
    first_hue: Optional[float] = None
    last_hue: Optional[float] = None
    cell_ref: Optional[np.ndarray] = None
    prev_center: Optional[Tuple[float, float]] = None
    prev_gray: Optional[np.ndarray] = None
    prev_corners: Optional[np.ndarray] = None

    areas: List[Optional[float]] = []
    illum_sum = illum_count = 0.0
    motion_sum = motion_count = 0.0
    clutter_sum = clutter_count = 0.0
    ratio_sum = ratio_count = 0.0
    deform_sum = deform_count = 0.0
    camera_sum = camera_count = 0.0
    blur_sum = 0.0
    complexity_sum = 0.0

    for t, path in enumerate(seq.frames):
        image = read_image(path)
        gray = to_grayscale(image)
        shape = gray.shape

        blur_sum += _spectral_negentropy(gray)
        complexity_sum += _value_entropy(gray)

        cells = _cell_means(gray)
        if cell_ref is None:
            cell_ref = cells
        else:
            deform_sum += float(((cells - cell_ref) ** 2).sum())
            deform_count += 1

        if prev_gray is not None:
            camera_sum += _pair_translation(prev_gray, gray, prev_corners, rng)
            camera_count += 1
        prev_gray = gray
        prev_corners = _harris_corners(gray)

        if not present[t]:
            areas.append(None)
            prev_center = None
            continue

        region = seq.groundtruth[t]
        bounds = _bounds(region)
        x0, y0, x1, y1 = bounds
        width, height = x1 - x0, y1 - y0
        areas.append(width * height)

        if height > 0:
            ratio = width / height
            if ratio_ref is None:
                ratio_ref = ratio
            ratio_sum += ratio / ratio_ref
            ratio_count += 1

        center = _center(region)
        if prev_center is not None:
            motion_sum += math.hypot(center[0] - prev_center[0], center[1] - prev_center[1])
            motion_count += 1
        prev_center = center

        window = _pixel_slices(bounds, shape)
        if window is not None:
            inside_mean = float(gray[window].mean())
            if illum_ref is None:
                illum_ref = inside_mean
            else:
                illum_sum += abs(inside_mean - illum_ref)
                illum_count += 1

            hue = _hue_mean(image, window)
            if first_hue is None:
                first_hue = hue
            last_hue = hue

            ring = _ring_distance(image, bounds, shape)
            if ring is not None:
                clutter_sum += ring
                clutter_count += 1

    # Local size change needs a full window of present frames behind it.
    size_sum = 0.0
    for t in range(_SIZE_WINDOW, n):
        tail = areas[t - _SIZE_WINDOW : t + 1]
        if any(a is None for a in tail):
            continue
        here = tail[-1]
        size_sum += float(np.mean([abs(here - a) for a in tail[:-1]]))

    if first_hue is not None and last_hue is not None:
        swing = abs(first_hue - last_hue)
        color_change = min(swing, 360.0 - swing)
    else:
        color_change = 0.0

    def _mean(total: float, count: float) -> float:
        return total / count if count else 0.0

    return AttributeVector(
        illumination_change=_mean(illum_sum, illum_count),
        size_change=size_sum,
        object_motion=_mean(motion_sum, motion_count),
        clutter=_mean(clutter_sum, clutter_count),
        camera_motion=_mean(camera_sum, camera_count),
        blur=_mean(blur_sum, n),
        aspect_ratio_change=_mean(ratio_sum, ratio_count),
        color_change=color_change,
        deformation=_mean(deform_sum, deform_count),
        scene_complexity=_mean(complexity_sum, n),
    )


# ---------------------------------------------------------------------------
# clustering


def affinity_propagation(
    similarity: np.ndarray,
    preference: Union[str, float] = "auto",
    damping: float = 0.5,
    max_iter: int = 1000,
) -> ClusterResult:
    """Exemplar clustering by responsibility/availability message passing.

    The preference (self-similarity) steers how many exemplars emerge;
    ``"auto"`` uses the median off-diagonal similarity.  The run stops once
    the exemplar set has been stable for 50 rounds, which is also what the
    ``converged`` flag reports.
    """
    S = np.array(similarity, dtype=float)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] == 0:
        raise ParameterError(f"similarity must be a non-empty square matrix, got {S.shape}")
    if not np.all(np.isfinite(S)):
        raise ParameterError("similarity values must be finite")
    if not 0.0 <= damping < 1.0:
        raise ParameterError(f"damping must lie in [0, 1), got {damping!r}")
    if max_iter < 1:
        raise ParameterError(f"max_iter must be positive, got {max_iter!r}")
    n = S.shape[0]
    if n == 1:
        return ClusterResult(assignments=(0,), exemplars=(0,), iterations=0, converged=True)

    off_diag = S[~np.eye(n, dtype=bool)]
    pref = float(np.median(off_diag)) if preference == "auto" else float(preference)
    if not math.isfinite(pref):
        raise ParameterError(f"preference must be finite, got {pref!r}")
    idx = np.arange(n)
    S[idx, idx] = pref
    # Deterministic jitter so exact ties (duplicate points) cannot deadlock
    # the messages; far below any meaningful similarity difference.
    scale = 1e-12 * (float(S.max()) - float(S.min()) + 1.0)
    S = S + scale * np.random.default_rng(0).standard_normal(S.shape)

    R = np.zeros((n, n))
    A = np.zeros((n, n))
    last: Optional[np.ndarray] = None
    stable = 0
    converged = False
    iterations = 0

    for iterations in range(1, max_iter + 1):
        AS = A + S
        top = AS.argmax(axis=1)
        first = AS[idx, top]
        AS[idx, top] = -np.inf
        second = AS.max(axis=1)
        fresh = S - first[:, None]
        fresh[idx, top] = S[idx, top] - second
        R = damping * R + (1.0 - damping) * fresh

        positive = np.where(R > 0.0, R, 0.0)
        positive[idx, idx] = R[idx, idx]
        columns = positive.sum(axis=0)
        fresh = columns[None, :] - positive
        gain = fresh[idx, idx].copy()
        fresh = np.where(fresh < 0.0, fresh, 0.0)
        fresh[idx, idx] = gain
        A = damping * A + (1.0 - damping) * fresh

        exemplars = np.flatnonzero(R[idx, idx] + A[idx, idx] > 0.0)
        if exemplars.size and last is not None and np.array_equal(exemplars, last):
            stable += 1
        else:
            stable = 1 if exemplars.size else 0
        last = exemplars if exemplars.size else None
        if stable >= _STABLE_ROUNDS:
            converged = True
            break

    exemplars = np.flatnonzero(np.diag(R) + np.diag(A) > 0.0)
    if exemplars.size == 0:
        # Message passing can starve every candidate at a very low
        # preference; fall back to the single strongest one.
        exemplars = np.array([int(np.argmax(np.diag(R) + np.diag(A)))])
    assignments = exemplars[np.argmax(S[:, exemplars], axis=1)]
    assignments[exemplars] = exemplars
    return ClusterResult(
        assignments=tuple(int(a) for a in assignments),
        exemplars=tuple(int(e) for e in exemplars),
        iterations=iterations,
        converged=converged,
    )


def select_dataset(vectors: Sequence[AttributeVector], target_clusters: int) -> ClusterResult:
    """Cluster descriptor vectors into roughly ``target_clusters`` groups.

    Attributes are z-scored so no single unit dominates, similarities are
    negative squared Euclidean distances, and the shared preference is
    searched until the exemplar count matches the target (or comes as
    close as the data allows).  Picking representatives from the clusters
    is left to the operator.
    """
    vectors = list(vectors)
    n = len(vectors)
    if target_clusters < 1:
        raise ParameterError(f"target_clusters must be positive, got {target_clusters!r}")
    if n < target_clusters:
        raise ParameterError(f"cannot form {target_clusters} clusters from {n} sequences")

    X = np.stack([v.as_array() for v in vectors])
    X = X - X.mean(axis=0)
    spread = X.std(axis=0)
    live = spread > 0
    X[:, live] /= spread[live]
    X[:, ~live] = 0.0  # constant attributes carry no signal

    diff = X[:, None, :] - X[None, :, :]
    S = -(diff ** 2).sum(axis=2)

    def run(pref: float) -> ClusterResult:
        return affinity_propagation(S, preference=pref)

    best: Optional[ClusterResult] = None

    def note(result: ClusterResult) -> Optional[ClusterResult]:
        nonlocal best
        if best is None or abs(len(result.exemplars) - target_clusters) < abs(
            len(best.exemplars) - target_clusters
        ):
            best = result
        return result if len(result.exemplars) == target_clusters else None

    high = 0.0
    hit = note(run(high))
    if hit is not None:
        return hit

    off_diag = S[~np.eye(n, dtype=bool)]
    low = 2.0 * float(off_diag.min()) if off_diag.size and off_diag.min() < 0 else -1.0
    for _ in range(60):
        result = run(low)
        hit = note(result)
        if hit is not None:
            return hit
        if len(result.exemplars) <= target_clusters:
            break
        low *= 2.0

    for _ in range(60):
        mid = (low + high) / 2.0
        result = run(mid)
        hit = note(result)
        if hit is not None:
            return hit
        if len(result.exemplars) < target_clusters:
            low = mid
        else:
            high = mid

    assert best is not None
    return best


def write_attributes_csv(
    path: Union[str, Path],
    names: Sequence[str],
    vectors: Sequence[AttributeVector],
    clusters: Optional[ClusterResult] = None,
) -> Path:
    """One row per sequence: name, the ten descriptors, cluster membership."""
    if len(names) != len(vectors):
        raise ParameterError(f"{len(names)} names for {len(vectors)} vectors")
    if clusters is not None and len(clusters.assignments) != len(vectors):
        raise ParameterError("cluster result does not match the vectors")
    out = Path(path)
    out.parent.mkdir(parents=True, exist_ok=True)
    with out.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["sequence", *ATTRIBUTE_NAMES, "cluster", "exemplar"])
        for i, (name, vec) in enumerate(zip(names, vectors)):
            cells: List[str] = [name]
            cells.extend(format(getattr(vec, a), ".6g") for a in ATTRIBUTE_NAMES)
            if clusters is None:
                cells.extend(["", ""])
            else:
                cells.append(str(clusters.assignments[i]))
                cells.append("1" if i in clusters.exemplars else "0")
            writer.writerow(cells)
    return out
