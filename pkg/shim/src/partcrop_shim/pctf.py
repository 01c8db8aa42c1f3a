"""Standalone PCTF codec.

Layout: ``PCTF`` magic, u8 version (1), u8 ndim, ndim little-endian u32
dims, row-major little-endian f32 payload.  Finite values only.  Kept
independent of the attack toolkit so the two implementations check each
other byte for byte.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"PCTF"
VERSION = 1


def write_tensor(t, path: str | Path) -> None:
    arr = np.ascontiguousarray(t, dtype=np.float32)
    if arr.size and not np.isfinite(arr).all():
        raise ValueError("refusing to write non-finite tensor")
    if arr.ndim > 255:
        raise ValueError("too many dimensions for PCTF")
    for dim in arr.shape:
        if not 0 < dim <= 0xFFFFFFFF:
            raise ValueError(f"dimension {dim} out of u32 range")
    blob = MAGIC + struct.pack("<BB", VERSION, arr.ndim)
    blob += struct.pack(f"<{arr.ndim}I", *arr.shape)
    blob += arr.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(blob)


def read_tensor(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != MAGIC or len(data) < 6:
        raise ValueError(f"{path}: not a PCTF file")
    version, ndim = data[4], data[5]
    if version != VERSION:
        raise ValueError(f"{path}: unsupported version {version}")
    offset = 6 + 4 * ndim
    if len(data) < offset:
        raise ValueError(f"{path}: truncated dimension table")
    shape = struct.unpack(f"<{ndim}I", data[6:offset])
    count = 1
    for dim in shape:
        if dim == 0:
            raise ValueError(f"{path}: zero-sized dimension")
        count *= dim
    if len(data) != offset + 4 * count:
        raise ValueError(f"{path}: payload size mismatch")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=offset)
    arr = arr.reshape(shape).astype(np.float32, copy=True)
    if not np.isfinite(arr).all():
        raise ValueError(f"{path}: non-finite payload")
    return arr
