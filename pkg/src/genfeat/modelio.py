"""Model persistence, feature files and seed derivation shared by the extractors."""

from __future__ import annotations

import hashlib
import importlib
import json
import struct
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .nn import checkpoint

FEAT_MAGIC = b"FEAT"


def stage_seed(master: int, stage: str) -> int:
    """Derive a stable 64-bit seed for ``stage`` from a master seed."""
    digest = hashlib.sha256(f"{int(master)}:{stage}".encode()).digest()
    return int.from_bytes(digest[:8], "little")


def minibatches(n: int, batch_size: int, rng: np.random.Generator):
    order = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield order[start:start + batch_size]


def as_batch(x, seq_len: int, width: int, what: str):
    """Promote [T, D] to [1, T, D]; return (batch, was_single)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (seq_len, width):
        raise ValueError(f"{what}: expected [{seq_len}, {width}] inputs, got {x.shape}")
    return x, single


def save_model(model, path) -> None:
    """Write a GFT1 checkpoint plus a JSON sidecar describing how to rebuild it."""
    path = Path(path)
    checkpoint.save(model.store, path)
    meta = {"kind": model.kind, "config": asdict(model.config), "trained": model.trained}
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


_BUILDERS = {
    "vae": ("vae", "VaeModel", "VaeConfig"),
    "aae": ("aae", "AaeModel", "AaeConfig"),
    "acgan-generator": ("acgan", "GeneratorModel", "GanConfig"),
    "acgan-discriminator": ("acgan", "DiscriminatorModel", "GanConfig"),
    "classifier": ("classifiers", "ClassifierModel", "ClassifierSpec"),
}


def load_model(path):
    """Rebuild a model from its JSON sidecar and fill in the checkpoint weights."""
    path = Path(path)
    meta = json.loads(path.with_suffix(".json").read_text())
    if meta["kind"] not in _BUILDERS:
        raise ValueError(f"unknown model kind {meta['kind']!r}")
    module_name, model_name, config_name = _BUILDERS[meta["kind"]]
    module = importlib.import_module(f"{__package__}.{module_name}")
    cls, cfg_cls = getattr(module, model_name), getattr(module, config_name)
    cfg = dict(meta["config"])
    for key, value in cfg.items():
        if isinstance(value, list):
            cfg[key] = tuple(value)
    model = cls(cfg_cls(**cfg))
    checkpoint.load(model.store, path)
    model.trained = meta["trained"]
    return model


def write_features(path, ids, features) -> None:
    """FEAT file: magic, uint32 doc count, uint32 rows, uint32 cols, float32 data.

    Document ids go to ``<path>.ids.jsonl`` in the same order.
    """
    features = np.asarray(features)
    if features.ndim != 3 or len(ids) != features.shape[0]:
        raise ValueError("features must be [docs, rows, cols] with one id per doc")
    path = Path(path)
    with path.open("wb") as f:
        f.write(FEAT_MAGIC)
        f.write(struct.pack("<3I", *features.shape))
        f.write(np.ascontiguousarray(features, dtype="<f4").tobytes())
    with open(str(path) + ".ids.jsonl", "w", encoding="utf-8") as f:
        for doc_id in ids:
            f.write(json.dumps({"id": doc_id}, ensure_ascii=False) + "\n")


def read_features(path):
    path = Path(path)
    blob = path.read_bytes()
    if blob[:4] != FEAT_MAGIC:
        raise ValueError(f"{path} is not a FEAT file")
    n, rows, cols = struct.unpack_from("<3I", blob, 4)
    data = np.frombuffer(blob, dtype="<f4", offset=16, count=n * rows * cols)
    with open(str(path) + ".ids.jsonl", encoding="utf-8") as f:
        ids = [json.loads(line)["id"] for line in f if line.strip()]
    return ids, data.reshape(n, rows, cols).astype(float)
