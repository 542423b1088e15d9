"""TNSR — minimal binary container for one dense tensor.

Layout (little-endian):
  bytes 0-3   magic  b"TNSR"
  byte  4     version (1)
  byte  5     dtype code: 0 = float32, 1 = uint8
  byte  6     ndim
  then        ndim × u32 dims
  then        row-major payload, product(dims) × itemsize bytes

Used for normal maps, height maps and checkpoint parameters. A write→read
roundtrip is bitwise identity.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import StoreError

MAGIC = b"TNSR"
VERSION = 1
HEADER = struct.Struct("<4sBBB")

DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("u1")}


def encode(array: np.ndarray) -> bytes:
    """Serialize a float32 or uint8 array."""
    arr = np.asarray(array)
    if arr.dtype.kind == "f" and arr.dtype.itemsize == 4:
        code = 0
    elif arr.dtype == np.uint8:
        code = 1
    else:
        raise StoreError(f"TNSR stores float32 or uint8 only, got {arr.dtype}")
    if arr.ndim > 255:
        raise StoreError(f"TNSR rank must be ≤ 255, got {arr.ndim}")
    header = HEADER.pack(MAGIC, VERSION, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = np.ascontiguousarray(arr, dtype=DTYPE_CODES[code]).tobytes()
    return header + dims + payload


def decode(blob: bytes, source: str = "<bytes>") -> np.ndarray:
    """Parse a TNSR blob; raises StoreError naming `source` on any inconsistency."""
    if len(blob) < HEADER.size:
        raise StoreError(f"{source}: {len(blob)} bytes is shorter than the TNSR header")
    magic, version, code, ndim = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise StoreError(f"{source}: bad magic {magic!r} — not a TNSR file")
    if version != VERSION:
        raise StoreError(f"{source}: TNSR version {version} unsupported (expected {VERSION})")
    if code not in DTYPE_CODES:
        raise StoreError(f"{source}: unknown TNSR dtype code {code}")
    offset = HEADER.size
    if len(blob) < offset + 4 * ndim:
        raise StoreError(f"{source}: truncated dims block")
    dims = struct.unpack_from(f"<{ndim}I", blob, offset)
    offset += 4 * ndim
    dtype = DTYPE_CODES[code]
    expected = int(np.prod(dims, dtype=np.int64)) * dtype.itemsize
    if len(blob) - offset != expected:
        raise StoreError(
            f"{source}: payload is {len(blob) - offset} bytes, dims {list(dims)} need {expected}"
        )
    arr = np.frombuffer(blob, dtype=dtype, count=expected // dtype.itemsize, offset=offset)
    return arr.reshape(dims).astype(dtype.newbyteorder("="), copy=True)


def write(path: str | Path, array: np.ndarray) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(encode(array))
    except OSError as e:
        raise StoreError(f"Cannot write TNSR {path}: {e.strerror or e}") from None
    return path


def read(path: str | Path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as e:
        raise StoreError(f"Cannot read TNSR {path}: {e.strerror or e}") from None
    return decode(blob, str(path))
