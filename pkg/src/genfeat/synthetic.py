"""Seeded toy corpora for smoke tests and the desk-scale pipeline check.

Each class owns a band of pseudo-words; every token is drawn from the
document's class band with probability ``bias`` and uniformly from the whole
vocabulary otherwise.  A bag-of-words model separates the classes almost
perfectly, which makes the corpus a useful end-to-end oracle.
"""

from __future__ import annotations

import csv

import numpy as np

from .corpus import CATEGORIES, Document

_ONSETS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def pseudo_words(n: int, seed: int = 0) -> list:
    """``n`` distinct lowercase Latin pseudo-words of two or three syllables."""
    rng = np.random.default_rng(seed)
    words, seen = [], set()
    while len(words) < n:
        syllables = rng.integers(2, 4)
        word = "".join(_ONSETS[rng.integers(len(_ONSETS))] + _VOWELS[rng.integers(len(_VOWELS))]
                       for _ in range(syllables))
        if word not in seen:
            seen.add(word)
            words.append(word)
    return words


def synthetic_corpus(n_docs: int = 300, n_classes: int = 3, vocab_size: int = 50,
                     bias: float = 0.6, min_words: int = 60, max_words: int = 200,
                     seed: int = 0) -> list:
    """Balanced labeled documents using the first ``n_classes`` categories."""
    if not 2 <= n_classes <= len(CATEGORIES):
        raise ValueError(f"n_classes must lie in [2, {len(CATEGORIES)}]")
    band = vocab_size // n_classes
    if band < 1:
        raise ValueError("vocabulary too small for the number of classes")
    words = pseudo_words(vocab_size, seed)
    rng = np.random.default_rng(seed + 1)
    docs = []
    for i in range(n_docs):
        label = i % n_classes
        length = int(rng.integers(min_words, max_words + 1))
        in_band = rng.random(length) < bias
        tokens = np.where(in_band, label * band + rng.integers(0, band, length),
                          rng.integers(0, vocab_size, length))
        sentences, start = [], 0
        while start < length:
            stop = min(length, start + int(rng.integers(5, 15)))
            sentences.append(" ".join(words[t] for t in tokens[start:stop]) + "।")
            start = stop
        docs.append(Document(f"syn{i:04d}", " ".join(sentences), CATEGORIES[label], "synthetic"))
    return docs


def write_corpus_csv(path, documents) -> None:
    """Write documents in the ingest CSV layout (id, text, label, source, votes)."""
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(["id", "text", "label", "source", "votes"])
        for d in documents:
            writer.writerow([d.id, d.text, d.label or "", d.source, ";".join(d.votes)])
