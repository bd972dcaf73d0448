"""Binary PPM (P6) and PGM (P5) image reading and writing.

Only the 8-bit binary forms are supported; that is the entire on-disk image
surface of the toolkit.  Color frames are (H, W, 3) uint8 arrays, grayscale
frames (H, W) uint8.
"""

from __future__ import annotations

from pathlib import Path
from typing import Union

import numpy as np

from .errors import FormatError

__all__ = ["read_image", "write_image", "to_grayscale"]

_MAGICS = {b"P6": 3, b"P5": 1}


def _read_header_tokens(data: bytes, path: Path) -> tuple[bytes, int, int, int, int]:
    """Return (magic, width, height, maxval, raster offset)."""
    if len(data) < 2 or data[:2] not in _MAGICS:
        raise FormatError("not a binary PPM/PGM file", file=path)
    magic = data[:2]
    pos = 2
    tokens: list[int] = []
    while len(tokens) < 3:
        if pos >= len(data):
            raise FormatError("truncated header", file=path)
        c = data[pos]
        if c in b" \t\r\n":
            pos += 1
            continue
        if c == ord("#"):
            nl = data.find(b"\n", pos)
            if nl == -1:
                raise FormatError("unterminated comment in header", file=path)
            pos = nl + 1
            continue
        start = pos
        while pos < len(data) and data[pos] not in b" \t\r\n#":
            pos += 1
        token = data[start:pos]
        if not token.isdigit():
            raise FormatError(f"bad header token {token!r}", file=path)
        tokens.append(int(token))
    if pos >= len(data) or data[pos] not in b" \t\r\n":
        raise FormatError("missing whitespace after maxval", file=path)
    pos += 1
    width, height, maxval = tokens
    return magic, width, height, maxval, pos


def read_image(path: Union[str, Path]) -> np.ndarray:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise FormatError(f"cannot read image: {exc}", file=path) from exc
    magic, width, height, maxval, pos = _read_header_tokens(data, path)
    if maxval != 255:
        raise FormatError(f"only 8-bit images supported, maxval={maxval}", file=path)
    if width <= 0 or height <= 0:
        raise FormatError(f"bad dimensions {width}x{height}", file=path)
    channels = _MAGICS[magic]
    need = width * height * channels
    raster = data[pos : pos + need]
    if len(raster) < need:
        raise FormatError(
            f"short raster: expected {need} bytes, got {len(raster)}", file=path
        )
    arr = np.frombuffer(raster, dtype=np.uint8)
    if channels == 1:
        return arr.reshape(height, width).copy()
    return arr.reshape(height, width, 3).copy()


def write_image(path: Union[str, Path], image: np.ndarray) -> None:
    path = Path(path)
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        raise FormatError(f"image must be uint8, got {arr.dtype}", file=path)
    if arr.ndim == 2:
        magic = b"P5"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        magic = b"P6"
    else:
        raise FormatError(f"unsupported image shape {arr.shape}", file=path)
    h, w = arr.shape[:2]
    header = magic + b"\n%d %d\n255\n" % (w, h)
    path.write_bytes(header + arr.tobytes())


def to_grayscale(image: np.ndarray) -> np.ndarray:
    """Luma-weighted grayscale as float64 in [0, 255]."""
    if image.ndim == 2:
        return image.astype(np.float64)
    rgb = image.astype(np.float64)
    return 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
