"""Text cleaning, tokenization, stopword removal, stemming and encoding.

Raw documents become fixed-length token-index sequences; a frozen embedding
table turns those into [seq_len, embed_dim] matrices for the extractors.
"""

from __future__ import annotations

import json
import logging
import unicodedata
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)

PAD, UNK = 0, 1
PAD_TOKEN, UNK_TOKEN = "<pad>", "<unk>"

DEFAULT_SEQ_LEN = 200
DEFAULT_EMBED_DIM = 128
DEFAULT_VOCAB_CAP = 50_000


@dataclass
class PreprocessConfig:
    stopwords_path: str | None = None
    stems_path: str | None = None
    seq_len: int = DEFAULT_SEQ_LEN
    embed_dim: int = DEFAULT_EMBED_DIM
    vocab_cap: int = DEFAULT_VOCAB_CAP

    def __post_init__(self):
        if self.seq_len < 1 or self.embed_dim < 1:
            raise ValueError("sequence length and embedding dimension must be >= 1")
        if self.vocab_cap < 2:
            raise ValueError("vocabulary cap must be >= 2")


def _keep(ch: str) -> bool:
    # letters plus combining marks: Bangla vowel signs and virama are category M
    return unicodedata.category(ch)[0] in "LM"


def clean_text(raw) -> str:
    """Strip everything except letters, combining marks and whitespace."""
    if isinstance(raw, (bytes, bytearray)):
        raw = bytes(raw).decode("utf-8")  # UnicodeDecodeError on invalid input
    text = unicodedata.normalize("NFC", raw)
    out = []
    for ch in text:
        if _keep(ch) or ch.isspace():
            out.append(ch)
        elif unicodedata.category(ch) != "Cf":  # zero-width joiners vanish
            out.append(" ")
    return " ".join("".join(out).split())


def tokenize(cleaned: str) -> list:
    return cleaned.split()


def _data_lines(path):
    if path is None:
        raise ValueError("path required")
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"data file not found: {path}")
    for line in path.read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            yield unicodedata.normalize("NFC", line)


def _shipped(name: str) -> Path:
    return Path(str(resources.files("genfeat") / "data" / name))


def load_stopwords(path=None) -> frozenset:
    """Read a stopword file; ``None`` loads the shipped Bangla list."""
    return frozenset(_data_lines(_shipped("stopwords_bn.txt") if path is None else path))


def load_stem_rules(path=None) -> list:
    """Read ``suffix<TAB>min_stem_len`` rules, sorted longest suffix first."""
    rules = []
    for line in _data_lines(_shipped("stem_rules_bn.tsv") if path is None else path):
        suffix, _, min_len = line.partition("\t")
        if not min_len:
            raise ValueError(f"stem rule needs a tab-separated minimum length: {line!r}")
        rules.append((suffix, int(min_len)))
    rules.sort(key=lambda r: -len(r[0]))
    return rules


def remove_stopwords(tokens, stopwords) -> list:
    return [t for t in tokens if t not in stopwords]


def stem(tokens, rules) -> list:
    """Strip at most one suffix from each token (longest matching rule wins)."""
    ordered = sorted(rules, key=lambda r: -len(r[0]))
    out = []
    for tok in tokens:
        for suffix, min_len in ordered:
            if tok.endswith(suffix) and len(tok) - len(suffix) >= min_len:
                tok = tok[:-len(suffix)]
                break
        out.append(tok)
    return out


def preprocess_text(raw, stopwords=frozenset(), rules=()) -> list:
    tokens = remove_stopwords(tokenize(clean_text(raw)), stopwords)
    # stemming can expose a stopword, so filter again
    return remove_stopwords(stem(tokens, rules), stopwords)


@dataclass
class Vocabulary:
    index: dict
    counts: dict
    cap: int

    def __len__(self):
        return len(self.index)

    def lookup(self, token: str) -> int:
        return self.index.get(token, UNK)

    def to_json(self) -> str:
        return json.dumps({"cap": self.cap, "tokens": list(self.index),
                           "counts": [self.counts.get(t, 0) for t in self.index]},
                          ensure_ascii=False)

    @classmethod
    def from_json(cls, text: str) -> "Vocabulary":
        obj = json.loads(text)
        tokens = obj["tokens"]
        return cls({t: i for i, t in enumerate(tokens)},
                   dict(zip(tokens, obj["counts"])), obj["cap"])


def build_vocab(corpus, cap: int = DEFAULT_VOCAB_CAP) -> Vocabulary:
    """Keep the ``cap - 2`` most frequent tokens; ties go to the smaller token."""
    if cap < 2:
        raise ValueError("vocabulary cap must be >= 2")
    counts = Counter()
    docs = 0
    for tokens in corpus:
        counts.update(tokens)
        docs += 1
    if docs == 0:
        raise ValueError("cannot build a vocabulary from an empty corpus")
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))[:cap - 2]
    index = {PAD_TOKEN: PAD, UNK_TOKEN: UNK}
    for tok, _ in ranked:
        index[tok] = len(index)
    kept = {tok: c for tok, c in ranked}
    return Vocabulary(index, kept, cap)


def encode_document(tokens, vocab: Vocabulary, length: int = DEFAULT_SEQ_LEN) -> np.ndarray:
    """Head-truncate / right-pad to ``length`` token indices."""
    ids = [vocab.lookup(t) for t in tokens[:length]]
    out = np.full(length, PAD, dtype=np.int64)
    out[:len(ids)] = ids
    return out


class EmbeddingTable:
    """Frozen token embedding: index sequences -> [T, embed_dim] matrices.

    Rows are drawn uniformly from [0, 1) with a seeded generator; the padding
    row is zero.  Values in the unit interval keep the reconstruction targets
    reachable for sigmoid-output decoders.
    """

    def __init__(self, table: np.ndarray):
        self.table = np.asarray(table, dtype=float)

    @classmethod
    def create(cls, vocab_size: int, dim: int = DEFAULT_EMBED_DIM, seed: int = 0):
        rng = np.random.default_rng(seed)
        table = rng.uniform(0.0, 1.0, size=(vocab_size, dim))
        table[PAD] = 0.0
        return cls(table)

    @property
    def dim(self) -> int:
        return self.table.shape[1]

    def embed(self, indices) -> np.ndarray:
        indices = np.asarray(indices)
        if indices.size and indices.max() >= len(self.table):
            raise IndexError("token index outside the embedding table")
        return self.table[indices]


def write_encoded(path, records) -> None:
    """JSON Lines with one {id, label, indices} object per document."""
    with open(path, "w", encoding="utf-8") as f:
        for rec in records:
            f.write(json.dumps({"id": rec["id"], "label": rec["label"],
                                "indices": [int(i) for i in rec["indices"]]},
                               ensure_ascii=False) + "\n")


def read_encoded(path) -> list:
    out = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rec = json.loads(line)
                rec["indices"] = np.asarray(rec["indices"], dtype=np.int64)
                out.append(rec)
    return out
