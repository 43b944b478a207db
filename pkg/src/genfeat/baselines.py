"""Non-generative comparison features: PCA and transformer layer sums.

The LYR1 layer-embedding file stores, per document, one vector per
(token, layer):

    b"LYR1", uint32 doc count, uint32 layer count, uint32 width,
    then per document: uint32 token count, float32 [tokens, layers, width]

with document ids in ``<path>.ids.jsonl``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LYR_MAGIC = b"LYR1"
BERT_LAYERS = 12
BERT_WIDTH = 768
SELECTIONS = ("all-12", "last-4", "last-only")


@dataclass
class PcaModel:
    mean: np.ndarray        # [D]
    axes: np.ndarray        # [D, k], orthonormal columns
    explained: np.ndarray   # [k] explained-variance ratios

    @property
    def k(self) -> int:
        return self.axes.shape[1]


def _pool_rows(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return x.reshape(-1, x.shape[-1]) if x.ndim > 2 else x


def pca_fit(x, k: int = 32, tol: float = 1e-10) -> PcaModel:
    """Top-``k`` principal axes of position-pooled rows.

    ``x`` may be [rows, D] or [docs, positions, D]; every position of every
    document counts as one sample.  Each axis is signed so that its
    largest-magnitude coordinate is positive.
    """
    rows = _pool_rows(x)
    n, dim = rows.shape
    if not 1 <= k <= dim:
        raise ValueError(f"k must lie in [1, {dim}], got {k}")
    if n <= k:
        raise ValueError(f"need more than k={k} rows, got {n}")
    mean = rows.mean(axis=0)
    centered = rows - mean
    cov = centered.T @ centered / (n - 1)
    values, vectors = np.linalg.eigh(cov)
    order = np.argsort(values)[::-1]
    values, vectors = np.clip(values[order], 0.0, None), vectors[:, order]
    rank = int((values > tol * max(values[0], tol)).sum())
    if rank < k:
        raise ValueError(f"data has rank {rank}; cannot extract {k} components "
                         f"(achievable rank {rank})")
    axes = vectors[:, :k].copy()
    pivots = np.abs(axes).argmax(axis=0)
    axes *= np.sign(axes[pivots, np.arange(k)])
    total = values.sum()
    return PcaModel(mean, axes, values[:k] / total)


def pca_project(model: PcaModel, x) -> np.ndarray:
    """(x_t - mean) @ axes at every position: [T, D] -> [T, k]."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != model.mean.shape[0]:
        raise ValueError(f"expected width {model.mean.shape[0]}, got {x.shape[-1]}")
    return (x - model.mean) @ model.axes


def pca_reconstruct(model: PcaModel, codes) -> np.ndarray:
    codes = np.asarray(codes, dtype=float)
    if codes.shape[-1] != model.k:
        raise ValueError(f"expected {model.k} components, got {codes.shape[-1]}")
    return codes @ model.axes.T + model.mean


def sum_layer_embeddings(layers, selection: str = "last-4") -> np.ndarray:
    """Sum the selected transformer layers per token.

    ``layers`` is [tokens, 12, width]; returns [tokens, width].
    """
    layers = np.asarray(layers, dtype=float)
    if layers.ndim != 3 or layers.shape[1] != BERT_LAYERS:
        raise ValueError(f"expected [tokens, {BERT_LAYERS}, width] layers, got {layers.shape}")
    if selection == "all-12":
        return layers.sum(axis=1)
    if selection == "last-4":
        return layers[:, -4:].sum(axis=1)
    if selection == "last-only":
        return layers[:, -1].copy()
    raise ValueError(f"selection must be one of {SELECTIONS}, got {selection!r}")


def truncate_embedding_dim(vectors, target: int) -> np.ndarray:
    vectors = np.asarray(vectors)
    if not 1 <= target <= vectors.shape[-1]:
        raise ValueError(f"cannot truncate width {vectors.shape[-1]} to {target}")
    return vectors[..., :target]


def write_layer_file(path, ids, documents) -> None:
    """``documents`` is a list of [tokens, layers, width] arrays."""
    documents = [np.asarray(d) for d in documents]
    if len(ids) != len(documents):
        raise ValueError("one id per document required")
    shapes = {d.shape[1:] for d in documents}
    if len(shapes) > 1 or any(d.ndim != 3 for d in documents):
        raise ValueError("all documents need matching [tokens, layers, width] shapes")
    layers, width = shapes.pop() if shapes else (BERT_LAYERS, BERT_WIDTH)
    path = Path(path)
    with path.open("wb") as f:
        f.write(LYR_MAGIC)
        f.write(struct.pack("<3I", len(documents), layers, width))
        for d in documents:
            f.write(struct.pack("<I", d.shape[0]))
            f.write(np.ascontiguousarray(d, dtype="<f4").tobytes())
    with open(str(path) + ".ids.jsonl", "w", encoding="utf-8") as f:
        for doc_id in ids:
            f.write(json.dumps({"id": doc_id}, ensure_ascii=False) + "\n")


def read_layer_file(path, expect_layers: int = BERT_LAYERS):
    """Return (ids, list of [tokens, layers, width] arrays)."""
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != LYR_MAGIC:
        raise ValueError(f"{path} is not a LYR1 file")
    n, layers, width = struct.unpack_from("<3I", blob, 4)
    if expect_layers is not None and layers != expect_layers:
        raise ValueError(f"{path}: {layers} layers, expected {expect_layers}")
    offset, docs = 16, []
    for _ in range(n):
        if offset + 4 > len(blob):
            raise ValueError(f"{path}: truncated file")
        (tokens,) = struct.unpack_from("<I", blob, offset)
        offset += 4
        count = tokens * layers * width
        if offset + 4 * count > len(blob):
            raise ValueError(f"{path}: truncated file")
        docs.append(np.frombuffer(blob, "<f4", count, offset).reshape(tokens, layers, width)
                    .astype(float))
        offset += 4 * count
    with open(str(path) + ".ids.jsonl", encoding="utf-8") as f:
        ids = [json.loads(line)["id"] for line in f if line.strip()]
    if len(ids) != n:
        raise ValueError(f"{path}: {len(ids)} ids for {n} documents")
    return ids, docs
