"""Template matching by exhaustive normalized cross-correlation.

The template is cut from the first frame and never updated; each later frame
is scanned over a square window of candidate offsets around the previous
position. Deliberately simple: every candidate is scored, no pyramid, no
subpixel refinement.
"""

from dataclasses import dataclass, field
from math import sqrt
from operator import mul
from typing import List, Tuple

from .ppm import Image

Region = Tuple[float, float, float, float]


@dataclass
class NccState:
    """Mutable tracker state between frames."""

    template: Tuple[int, ...]  # flattened gray patch, row-major
    width: int  # template size in pixels
    height: int
    region: Region  # region as reported, float, size fixed at init
    anchor: Tuple[int, int]  # integer top-left of the current match
    search_radius: int = 20
    _t_mean: float = field(init=False)
    _t_norm: float = field(init=False)

    def __post_init__(self) -> None:
        if not self.template:
            raise ValueError("empty template")
        if self.search_radius < 1:
            raise ValueError("search radius must be at least 1")
        n = len(self.template)
        s = sum(self.template)
        self._t_mean = s / n
        # centered sum of squares; <= 0 means a flat patch
        sq = sum(v * v for v in self.template) - s * s / n
        self._t_norm = sqrt(sq) if sq > 1e-9 else 0.0


def _crop(frame: Image, x: int, y: int, w: int, h: int) -> Tuple[int, ...]:
    out: List[int] = []
    for row in frame[y : y + h]:
        out.extend(row[x : x + w])
    return tuple(out)


def init_state(frame: Image, region: Region, search_radius: int = 20) -> NccState:
    """Build tracker state from the first frame and its region."""
    x, y, w, h = region
    fh = len(frame)
    fw = len(frame[0])
    ix = min(max(int(round(x)), 0), fw - 1)
    iy = min(max(int(round(y)), 0), fh - 1)
    iw = max(int(round(w)), 1)
    ih = max(int(round(h)), 1)
    iw = min(iw, fw - ix)
    ih = min(ih, fh - iy)
    patch = _crop(frame, ix, iy, iw, ih)
    return NccState(
        template=patch,
        width=iw,
        height=ih,
        region=(float(x), float(y), float(w), float(h)),
        anchor=(ix, iy),
        search_radius=search_radius,
    )


def ncc_track(state: NccState, frame: Image) -> Region:
    """Match the template in a new frame and return the updated region.

    Every integer offset within the search radius of the previous anchor is
    scored; the window never leaves the frame (candidate anchors are clamped
    to the valid range). Ties go to the candidate closest to the previous
    position. A flat template or flat window scores zero, so a featureless
    scene leaves the region where it was.
    """
    fh = len(frame)
    fw = len(frame[0])
    tw, th = state.width, state.height
    if tw > fw or th > fh:
        raise ValueError("template larger than frame")
    ax, ay = state.anchor
    r = state.search_radius
    x_lo = max(0, ax - r)
    x_hi = min(fw - tw, ax + r)
    y_lo = max(0, ay - r)
    y_hi = min(fh - th, ay + r)
    if x_hi < x_lo:
        x_lo = x_hi = min(max(ax, 0), fw - tw)
    if y_hi < y_lo:
        y_lo = y_hi = min(max(ay, 0), fh - th)

    candidates = sorted(
        ((cx, cy) for cx in range(x_lo, x_hi + 1) for cy in range(y_lo, y_hi + 1)),
        key=lambda c: ((c[0] - ax) ** 2 + (c[1] - ay) ** 2, c[1] - ay, c[0] - ax),
    )

    tmpl = state.template
    t_norm = state._t_norm
    t_sum_term = state._t_mean * len(tmpl)
    n = len(tmpl)
    best_score = -2.0
    best = candidates[0]
    for cx, cy in candidates:
        window = _crop(frame, cx, cy, tw, th)
        if t_norm == 0.0:
            score = 0.0
        else:
            s = sum(window)
            sq = sum(v * v for v in window) - s * s / n
            if sq <= 1e-9:
                score = 0.0
            else:
                dot = sum(map(mul, tmpl, window))
                score = (dot - state._t_mean * s) / (t_norm * sqrt(sq))
        # strict comparison keeps the first (nearest) candidate on ties
        if score > best_score:
            best_score = score
            best = (cx, cy)

    dx = best[0] - ax
    dy = best[1] - ay
    x, y, w, h = state.region
    state.region = (x + dx, y + dy, w, h)
    state.anchor = best
    return state.region
