"""Line-protocol client wrapping a tracker behind stdin/stdout.

The evaluator speaks one request per line and expects one reply per line:

    tracker   -> hello version=1        once, at startup
    evaluator -> initialize <path> <region>
    evaluator -> frame <path>
    evaluator -> quit
    tracker   -> status <region>        reply to initialize and frame

Regions travel as comma-joined floats: four numbers for an axis-aligned box
(x, y, w, h), eight for the corners of a quad. Replies always use the
four-number form with four fractional digits.
"""

import sys
from typing import Callable, List, TextIO, Tuple

from .ncc import Region, init_state, ncc_track
from .ppm import Image, read_netpbm

VERSION = 1

Handler = Callable[..., Region]


def parse_region_text(text: str) -> Region:
    """Turn wire text into an (x, y, w, h) box.

    Eight-number quads are reduced to their axis-aligned bounding box; the
    matcher only works on upright rectangles anyway.
    """
    try:
        values = [float(p) for p in text.split(",")]
    except ValueError:
        raise ValueError(f"unparseable region {text!r}") from None
    if len(values) == 4:
        x, y, w, h = values
    elif len(values) == 8:
        xs = values[0::2]
        ys = values[1::2]
        x, y = min(xs), min(ys)
        w, h = max(xs) - x, max(ys) - y
    else:
        raise ValueError(f"region needs 4 or 8 numbers, got {len(values)}")
    if w <= 0 or h <= 0:
        raise ValueError(f"region has no area: {text!r}")
    return (x, y, w, h)


def format_status(region: Region) -> str:
    parts = []
    for v in region:
        s = f"{v:.4f}"
        parts.append("0.0000" if s == "-0.0000" else s)
    return "status " + ",".join(parts)


def protocol_client(
    on_initialize: Callable[[Image, Region], Region],
    on_frame: Callable[[Image], Region],
    stdin: TextIO = None,
    stdout: TextIO = None,
    stderr: TextIO = None,
) -> int:
    """Run one session: read requests until quit, reply with status lines.

    Frames are decoded here and handed to the handlers as images. Returns
    the process exit status: 0 after a clean quit, 1 on a malformed line,
    an unreadable frame or the evaluator hanging up without quitting.
    """
    stdin = stdin if stdin is not None else sys.stdin
    stdout = stdout if stdout is not None else sys.stdout
    stderr = stderr if stderr is not None else sys.stderr

    def reply(line: str) -> None:
        stdout.write(line + "\n")
        stdout.flush()

    def complain(message: str) -> int:
        stderr.write(message + "\n")
        stderr.flush()
        return 1

    reply(f"hello version={VERSION}")
    initialized = False
    for raw in stdin:
        parts = raw.split()
        if not parts:
            return complain("empty request line")
        verb = parts[0]
        if verb == "quit":
            if len(parts) != 1:
                return complain(f"malformed quit: {raw.strip()!r}")
            return 0
        if verb == "initialize":
            if len(parts) != 3:
                return complain(f"malformed initialize: {raw.strip()!r}")
            try:
                region = parse_region_text(parts[2])
            except ValueError as exc:
                return complain(str(exc))
        elif verb == "frame":
            if len(parts) != 2:
                return complain(f"malformed frame: {raw.strip()!r}")
            if not initialized:
                return complain("frame before initialize")
        else:
            return complain(f"unknown request {verb!r}")
        try:
            image = read_netpbm(parts[1])
        except (OSError, ValueError) as exc:
            return complain(f"cannot read frame {parts[1]}: {exc}")
        if verb == "initialize":
            out = on_initialize(image, region)
            initialized = True
        else:
            out = on_frame(image)
        reply(format_status(out))
    return complain("evaluator hung up without quit")


class NccTracker:
    """Session state holder wiring the matcher into the protocol loop."""

    def __init__(self, search_radius: int = 20):
        self.search_radius = search_radius
        self.state = None

    def on_initialize(self, frame: Image, region: Region) -> Region:
        self.state = init_state(frame, region, self.search_radius)
        return self.state.region

    def on_frame(self, frame: Image) -> Region:
        return ncc_track(self.state, frame)


def main() -> int:
    tracker = NccTracker()
    return protocol_client(tracker.on_initialize, tracker.on_frame)
