"""Binary tensor file format.

Layout: magic ``CFT1`` | version u8 (=1) | dtype u8 | rank u8 |
rank little-endian u32 dims | row-major little-endian payload.
dtype codes: 0 = float32, 1 = float64, 2 = complex64.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"CFT1"
VERSION = 1

_DTYPE_CODES = {0: np.dtype("<f4"), 1: np.dtype("<f8"), 2: np.dtype("<c8")}
_CODE_FOR = {np.dtype(np.float32): 0, np.dtype(np.float64): 1, np.dtype(np.complex64): 2}


class TensorFileError(Exception):
    """Malformed or unsupported tensor file."""


def pack_array(arr: np.ndarray) -> bytes:
    arr = np.ascontiguousarray(arr)
    if arr.dtype not in _CODE_FOR:
        raise TensorFileError(f"unsupported dtype {arr.dtype}")
    code = _CODE_FOR[arr.dtype]
    head = MAGIC + struct.pack("<BBB", VERSION, code, arr.ndim)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape) if arr.ndim else b""
    payload = arr.astype(_DTYPE_CODES[code], copy=False).tobytes(order="C")
    return head + dims + payload


def unpack_array(buf: bytes, offset: int = 0) -> tuple[np.ndarray, int]:
    """Decode one tensor starting at ``offset``; returns (array, next offset)."""
    if buf[offset : offset + 4] != MAGIC:
        raise TensorFileError("bad magic; not a CFT tensor blob")
    version, code, rank = struct.unpack_from("<BBB", buf, offset + 4)
    if version != VERSION:
        raise TensorFileError(f"unsupported tensor file version {version}")
    if code not in _DTYPE_CODES:
        raise TensorFileError(f"unknown dtype code {code}")
    pos = offset + 7
    dims = struct.unpack_from(f"<{rank}I", buf, pos) if rank else ()
    pos += 4 * rank
    dtype = _DTYPE_CODES[code]
    count = int(np.prod(dims)) if rank else 1
    nbytes = count * dtype.itemsize
    if pos + nbytes > len(buf):
        raise TensorFileError("truncated tensor payload")
    arr = np.frombuffer(buf, dtype=dtype, count=count, offset=pos).reshape(dims)
    return arr.copy(), pos + nbytes


def save_tensor(path: str | Path, arr: np.ndarray):
    Path(path).write_bytes(pack_array(arr))


def load_tensor(path: str | Path) -> np.ndarray:
    buf = Path(path).read_bytes()
    arr, end = unpack_array(buf)
    if end != len(buf):
        raise TensorFileError(f"{path}: {len(buf) - end} trailing bytes")
    return arr
