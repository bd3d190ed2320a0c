"""Checkpoint container format.

Layout: magic ``CFCK`` | version u8 | u32 little-endian entry count |
entries of (u16 name length, UTF-8 name, tensor blob). Entries are
written in sorted name order so files are byte-reproducible. Loading a
saved file restores every array bit-exactly, optimizer state included.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..ndgrad import pack_array, unpack_array
from ..ndgrad.tensor import Tensor

MAGIC = b"CFCK"
VERSION = 1


class CheckpointError(Exception):
    """Malformed checkpoint file."""


def save_checkpoint(path: str | Path, arrays: dict[str, np.ndarray | Tensor]):
    chunks = [MAGIC, struct.pack("<BI", VERSION, len(arrays))]
    for name in sorted(arrays):
        arr = arrays[name]
        if isinstance(arr, Tensor):
            arr = arr.data
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise CheckpointError(f"entry name too long: {name[:40]}...")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(pack_array(np.asarray(arr)))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(chunks))


def load_checkpoint(path: str | Path) -> dict[str, np.ndarray]:
    buf = Path(path).read_bytes()
    if buf[:4] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {buf[:4]!r}, not a checkpoint file")
    if len(buf) < 9:
        raise CheckpointError(f"{path}: truncated header")
    version, count = struct.unpack_from("<BI", buf, 4)
    if version != VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    pos = 9
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        if pos + 2 > len(buf):
            raise CheckpointError(f"{path}: truncated entry header")
        (nlen,) = struct.unpack_from("<H", buf, pos)
        pos += 2
        name = buf[pos : pos + nlen].decode("utf-8")
        pos += nlen
        try:
            arr, pos = unpack_array(buf, pos)
        except Exception as e:
            raise CheckpointError(f"{path}: entry '{name}': {e}") from None
        out[name] = arr
    if pos != len(buf):
        raise CheckpointError(f"{path}: {len(buf) - pos} trailing bytes")
    return out
