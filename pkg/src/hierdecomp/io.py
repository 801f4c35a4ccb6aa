"""Field file formats: the HSF1 binary container and binary PGM images.

HSF1 layout (little-endian)::

    b"HSF1" | u8 dim | u8 components | u32 size per axis | f64 samples

Samples are stored component-major, each component row-major.
"""

from __future__ import annotations

import os
import struct
from pathlib import Path

import numpy as np

from .grid import Field, TorusGrid

MAGIC = b"HSF1"


class FormatError(ValueError):
    """Raised for malformed or unsupported files."""


def write_hsf(path: str | os.PathLike, field: Field) -> None:
    header = MAGIC + struct.pack("<BB", field.grid.dim, field.components)
    header += struct.pack(f"<{field.grid.dim}I", *field.grid.shape)
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(field.data, dtype="<f8").tobytes())


def read_hsf(path: str | os.PathLike) -> Field:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise FormatError(f"{path}: not an HSF1 file")
    if len(raw) < 6:
        raise FormatError(f"{path}: truncated header")
    dim, comps = struct.unpack_from("<BB", raw, 4)
    if dim not in (2, 3) or comps < 1:
        raise FormatError(f"{path}: bad header (dim={dim}, components={comps})")
    offset = 6 + 4 * dim
    if len(raw) < offset:
        raise FormatError(f"{path}: truncated header")
    shape = struct.unpack_from(f"<{dim}I", raw, 6)
    count = comps * int(np.prod(shape))
    if len(raw) != offset + 8 * count:
        raise FormatError(f"{path}: expected {count} samples, file size disagrees")
    data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
    try:
        grid = TorusGrid(shape)
        return Field(grid, data.reshape((comps,) + tuple(shape)))
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def _pgm_tokens(raw: bytes, count: int) -> tuple[list[int], int]:
    """Read ``count`` whitespace-separated header integers, skipping comments."""
    tokens, pos = [], 2
    while len(tokens) < count:
        while pos < len(raw) and raw[pos:pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos:pos + 1] == b"#":
            while pos < len(raw) and raw[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(raw) and raw[pos:pos + 1].isdigit():
            pos += 1
        if start == pos:
            raise FormatError("malformed PGM header")
        tokens.append(int(raw[start:pos]))
    # exactly one whitespace byte separates the header from the raster
    return tokens, pos + 1


def read_pgm(path: str | os.PathLike) -> Field:
    """Read a binary (P5) PGM with 8- or 16-bit samples, scaled to [0, 1]."""
    raw = Path(path).read_bytes()
    if raw[:2] != b"P5":
        raise FormatError(f"{path}: only binary P5 PGM is supported")
    (width, height, maxval), pos = _pgm_tokens(raw, 3)
    if not (0 < maxval < 65536) or width <= 0 or height <= 0:
        raise FormatError(f"{path}: bad PGM header")
    dtype = np.dtype("u1") if maxval < 256 else np.dtype(">u2")
    count = width * height
    if len(raw) < pos + count * dtype.itemsize:
        raise FormatError(f"{path}: truncated raster")
    pixels = np.frombuffer(raw, dtype=dtype, count=count, offset=pos).reshape(height, width)
    try:
        return Field(TorusGrid((height, width)), pixels.astype(np.float64) / maxval)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc


def write_pgm(path: str | os.PathLike, field: Field, bits: int = 8,
              value_range: tuple[float, float] | None = None) -> None:
    """Write a scalar 2D field as a binary PGM.

    Values are mapped affinely from ``value_range`` (default: the field's own
    min and max) onto the full integer range and clipped.
    """
    if field.grid.dim != 2 or not field.is_scalar:
        raise FormatError("PGM output needs a scalar 2D field")
    if bits not in (8, 16):
        raise FormatError("PGM depth must be 8 or 16 bits")
    maxval = 255 if bits == 8 else 65535
    lo, hi = value_range if value_range is not None else (field.values.min(), field.values.max())
    span = hi - lo if hi > lo else 1.0
    scaled = np.clip(np.rint((field.values - lo) / span * maxval), 0, maxval)
    height, width = field.grid.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{width} {height}\n{maxval}\n".encode())
        fh.write(scaled.astype("u1" if bits == 8 else ">u2").tobytes())
