"""Binary netpbm decoding, by hand.

Only the two binary flavors are supported (P5 grayscale, P6 color) with a
maxval of at most 255, which is what the evaluator writes. Color input is
collapsed to integer luma so the matcher works on one channel.
"""

from pathlib import Path
from typing import List, Tuple, Union

Image = List[Tuple[int, ...]]  # rows of gray values, all the same length


def _next_token(data: bytes, pos: int) -> Tuple[bytes, int]:
    """Return the next header token, skipping whitespace and # comments."""
    n = len(data)
    while pos < n:
        c = data[pos : pos + 1]
        if c == b"#":
            while pos < n and data[pos : pos + 1] != b"\n":
                pos += 1
        elif c.isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not data[pos : pos + 1].isspace():
        pos += 1
    if start == pos:
        raise ValueError("truncated netpbm header")
    return data[start:pos], pos


def read_netpbm(path: Union[str, Path]) -> Image:
    """Decode a P5/P6 file into rows of gray integers (0..255)."""
    data = Path(path).read_bytes()
    magic, pos = _next_token(data, 0)
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"unsupported netpbm magic {magic!r}")
    fields = []
    for _ in range(3):
        token, pos = _next_token(data, pos)
        if not token.isdigit():
            raise ValueError(f"bad netpbm header field {token!r}")
        fields.append(int(token))
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise ValueError("empty image")
    if not 0 < maxval < 256:
        raise ValueError(f"unsupported maxval {maxval}")
    pos += 1  # single whitespace byte separates header from raster

    channels = 1 if magic == b"P5" else 3
    need = width * height * channels
    raster = data[pos : pos + need]
    if len(raster) != need:
        raise ValueError(f"raster holds {len(raster)} bytes, expected {need}")

    rows: Image = []
    stride = width * channels
    for y in range(height):
        line = raster[y * stride : (y + 1) * stride]
        if channels == 1:
            rows.append(tuple(line))
        else:
            rows.append(
                tuple(
                    (299 * line[i] + 587 * line[i + 1] + 114 * line[i + 2] + 500) // 1000
                    for i in range(0, stride, 3)
                )
            )
    return rows
