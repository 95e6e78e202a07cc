"""Flat binary checkpoint format.

Layout (all integers little-endian)::

    magic      8 bytes   b"OLCKPT01"
    u16        length of the variant name, then that many UTF-8 bytes
    u32        number of tensors T
    T times:   u16 name length, name bytes, u8 ndim, ndim x u64 dims
    payload    every tensor's values as little-endian float64, in table order
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

MAGIC = b"OLCKPT01"


def save_checkpoint(path, variant: str, tensors: dict[str, np.ndarray]) -> None:
    parts = [MAGIC]
    vb = variant.encode()
    parts.append(struct.pack("<H", len(vb)) + vb)
    parts.append(struct.pack("<I", len(tensors)))
    for name, arr in tensors.items():
        nb = name.encode()
        arr = np.asarray(arr)
        parts.append(struct.pack("<H", len(nb)) + nb + struct.pack("<B", arr.ndim))
        parts.append(struct.pack(f"<{arr.ndim}Q", *arr.shape))
    for arr in tensors.values():
        parts.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(b"".join(parts))


def load_checkpoint(path) -> tuple[str, dict[str, np.ndarray]]:
    data = Path(path).read_bytes()
    if data[:8] != MAGIC:
        raise ValueError(f"{path} is not a checkpoint file")
    pos = 8
    (n,) = struct.unpack_from("<H", data, pos)
    pos += 2
    variant = data[pos:pos + n].decode()
    pos += n
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    table = []
    for _ in range(count):
        (n,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos:pos + n].decode()
        pos += n
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}Q", data, pos)
        pos += 8 * ndim
        table.append((name, shape))
    tensors = {}
    for name, shape in table:
        size = int(np.prod(shape, dtype=np.int64))
        tensors[name] = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape).astype(float)
        pos += 8 * size
    if pos != len(data):
        raise ValueError("trailing bytes in checkpoint")
    return variant, tensors
