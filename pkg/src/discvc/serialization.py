"""Binary container shared by checkpoints, feature caches, and stats files.

Layout, all integers unsigned 64-bit little-endian:

    8 bytes   magic "DISCVC01"
    u64       length of the utf-8 config text blob, then the blob
    u64       tensor count
    per tensor:
        u64       name byte length, then the utf-8 name
        u64       rank
        rank*u64  dims
        data      row-major float32 little-endian

Round trips are bit-exact for float32 input arrays.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import CheckpointError

MAGIC = b"DISCVC01"
_U64 = struct.Struct("<Q")


def write_container(path, text: str, tensors: dict) -> None:
    blob = text.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(_U64.pack(len(blob)))
        fh.write(blob)
        fh.write(_U64.pack(len(tensors)))
        for name, arr in tensors.items():
            arr = np.ascontiguousarray(arr, dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(_U64.pack(len(encoded)))
            fh.write(encoded)
            fh.write(_U64.pack(arr.ndim))
            for dim in arr.shape:
                fh.write(_U64.pack(dim))
            fh.write(arr.tobytes())


def _read_exact(fh, n: int, path) -> bytes:
    data = fh.read(n)
    if len(data) != n:
        raise CheckpointError(f"{path}: truncated container (wanted {n} bytes, got {len(data)})")
    return data


def read_container(path):
    """Returns (config text, {name: float32 array})."""
    with open(path, "rb") as fh:
        magic = fh.read(len(MAGIC))
        if magic != MAGIC:
            raise CheckpointError(f"{path}: bad magic {magic!r}, expected {MAGIC!r}")
        (blob_len,) = _U64.unpack(_read_exact(fh, 8, path))
        text = _read_exact(fh, blob_len, path).decode("utf-8")
        (count,) = _U64.unpack(_read_exact(fh, 8, path))
        tensors = {}
        for _ in range(count):
            (name_len,) = _U64.unpack(_read_exact(fh, 8, path))
            name = _read_exact(fh, name_len, path).decode("utf-8")
            (rank,) = _U64.unpack(_read_exact(fh, 8, path))
            shape = tuple(_U64.unpack(_read_exact(fh, 8, path))[0] for _ in range(rank))
            n_items = int(np.prod(shape)) if shape else 1
            raw = _read_exact(fh, 4 * n_items, path)
            tensors[name] = np.frombuffer(raw, dtype="<f4").reshape(shape).copy()
        return text, tensors
