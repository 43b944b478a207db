"""GFT1 parameter checkpoints.

Layout (little-endian): magic ``GFT1``, uint32 record count, then per
record: uint32 name length, UTF-8 name, uint32 rank, rank x uint32 extents,
float32 values in row-major order.  Buffers are stored under ``@name``.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .params import ParamStore

MAGIC = b"GFT1"


def dumps(store: ParamStore) -> bytes:
    records = [(name, t.data) for name, t in store.params.items()]
    records += [("@" + name, b) for name, b in store.buffers.items()]
    chunks = [MAGIC, struct.pack("<I", len(records))]
    for name, arr in records:
        raw = name.encode("utf-8")
        chunks.append(struct.pack("<I", len(raw)))
        chunks.append(raw)
        chunks.append(struct.pack("<I", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def loads(blob: bytes) -> dict:
    if blob[:4] != MAGIC:
        raise ValueError("not a GFT1 checkpoint")
    pos = 4
    (count,) = struct.unpack_from("<I", blob, pos)
    pos += 4
    out = {}
    for _ in range(count):
        (n,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos:pos + n].decode("utf-8")
        pos += n
        (rank,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", blob, pos)
        pos += 4 * rank
        size = int(np.prod(shape, dtype=np.int64))
        out[name] = np.frombuffer(blob, dtype="<f4", count=size, offset=pos).reshape(shape).astype(float)
        pos += 4 * size
    if pos != len(blob):
        raise ValueError("trailing bytes in GFT1 checkpoint")
    return out


def save(store: ParamStore, path) -> None:
    Path(path).write_bytes(dumps(store))


def load(store: ParamStore, path) -> ParamStore:
    store.load(loads(Path(path).read_bytes()))
    return store
