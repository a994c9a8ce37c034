"""Binary PGM (P5) / PPM (P6) reading and writing."""
from __future__ import annotations

from pathlib import Path

import numpy as np


class PNMError(ValueError):
    pass


def _header_tokens(data: bytes, count: int):
    """Pull ``count`` whitespace-separated header tokens, skipping # comments."""
    tokens = []
    pos = 0
    n = len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= n:
            raise PNMError("truncated header")
        if data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pnm(path_or_bytes) -> np.ndarray:
    """Read a P5 or P6 file. Returns (rows, cols) or (rows, cols, 3), uint8 or uint16."""
    if isinstance(path_or_bytes, (bytes, bytearray)):
        data = bytes(path_or_bytes)
    else:
        data = Path(path_or_bytes).read_bytes()
    tokens, offset = _header_tokens(data, 4)
    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise PNMError(f"unsupported magic {magic!r}; only P5/P6 are handled")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PNMError("non-integer header field") from None
    if width <= 0 or height <= 0 or not 0 < maxval < 65536:
        raise PNMError("invalid header values")
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    expected = width * height * channels * dtype.itemsize
    raster = data[offset:offset + expected]
    if len(raster) < expected:
        raise PNMError("truncated raster")
    arr = np.frombuffer(raster, dtype=dtype).astype(np.uint16 if maxval > 255 else np.uint8)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return arr.reshape(shape)


def encode_pnm(img: np.ndarray, maxval: int | None = None) -> bytes:
    img = np.asarray(img)
    if img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    elif img.ndim == 2:
        magic = b"P5"
    else:
        raise PNMError(f"cannot encode array of shape {img.shape}")
    if maxval is None:
        maxval = 65535 if img.dtype == np.uint16 else 255
    if img.min(initial=0) < 0 or img.max(initial=0) > maxval:
        raise PNMError("pixel values outside [0, maxval]")
    dtype = ">u2" if maxval > 255 else "u1"
    h, w = img.shape[:2]
    header = b"%s\n%d %d\n%d\n" % (magic, w, h, maxval)
    return header + np.ascontiguousarray(img, dtype=dtype).tobytes()


def write_pnm(path, img: np.ndarray, maxval: int | None = None) -> None:
    Path(path).write_bytes(encode_pnm(img, maxval))


def grid_to_pgm16(values: np.ndarray) -> np.ndarray:
    """Scale a nonnegative grid to 16 bits: round(65535 * v / max), zeros if max is 0."""
    values = np.asarray(values, dtype=np.float64)
    peak = values.max(initial=0.0)
    if peak <= 0:
        return np.zeros(values.shape, dtype=np.uint16)
    return np.rint(65535.0 * np.clip(values, 0, None) / peak).astype(np.uint16)


def unit_to_pgm8(values: np.ndarray) -> np.ndarray:
    """Map a [0, 1] raster to 8 bits."""
    return np.rint(255.0 * np.clip(values, 0.0, 1.0)).astype(np.uint8)
