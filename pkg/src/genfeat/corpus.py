"""Document collection: CSV ingestion, deduplication, long-document
splitting, vote resolution, stratified splitting and class weights."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .preprocess import clean_text

log = logging.getLogger(__name__)

CATEGORIES = (
    "Govt. & Politics",
    "Science & Technology",
    "Economics",
    "Health & Lifestyle",
    "Entertainment",
    "Arts & Literature",
    "Sports",
)
PARTITIONS = ("train", "validation", "test")
DEFAULT_FRACTIONS = (0.7, 0.1, 0.2)
DEFAULT_MAX_WORDS = 200
SENTENCE_END = "।?!"


class IngestError(ValueError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line


class TieError(ValueError):
    """No strict plurality among annotator votes."""


@dataclass
class Document:
    id: str
    text: str
    label: str | None = None
    source: str = ""
    votes: tuple = ()

    def __post_init__(self):
        if self.label is not None and self.label not in CATEGORIES:
            raise ValueError(f"unknown category {self.label!r}")
        if len(self.votes) > 5:
            raise ValueError("at most 5 annotation votes per document")

    def to_dict(self) -> dict:
        return {"id": self.id, "text": self.text, "label": self.label,
                "source": self.source, "votes": list(self.votes)}

    @classmethod
    def from_dict(cls, d: dict) -> "Document":
        return cls(d["id"], d["text"], d.get("label"), d.get("source", ""),
                   tuple(d.get("votes", ())))


@dataclass
class Corpus:
    documents: list = field(default_factory=list)
    flagged: list = field(default_factory=list)   # ids needing re-annotation
    rejected: list = field(default_factory=list)  # (line, reason)

    def __len__(self):
        return len(self.documents)

    def __iter__(self):
        return iter(self.documents)

    def label_counts(self) -> dict:
        return dict(Counter(d.label for d in self.documents if d.label is not None))

    def stats(self) -> dict:
        """Per-category document count and mean characters / words / sentences."""
        out = {}
        for cat in CATEGORIES:
            docs = [d for d in self.documents if d.label == cat]
            if not docs:
                continue
            out[cat] = {
                "documents": len(docs),
                "chars": float(np.mean([len(d.text) for d in docs])),
                "words": float(np.mean([len(d.text.split()) for d in docs])),
                "sentences": float(np.mean([count_sentences(d.text) for d in docs])),
            }
        return out

    def stats_table(self) -> str:
        rows = [("Category", "Documents", "Avg chars", "Avg words", "Avg sentences")]
        for cat, s in self.stats().items():
            rows.append((cat, f"{s['documents']:,}", f"{s['chars']:.0f}", f"{s['words']:.0f}",
                         f"{s['sentences']:.0f}"))
        widths = [max(len(r[i]) for r in rows) for i in range(5)]
        return "\n".join(" | ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows) + "\n"


def split_sentences(text: str) -> list:
    parts = re.findall(rf"[^{SENTENCE_END}]*[{SENTENCE_END}]+|[^{SENTENCE_END}]+$", text)
    return [p.strip() for p in parts if p.strip()]


def count_sentences(text: str) -> int:
    return len(split_sentences(text))


def majority_vote(votes) -> str:
    votes = list(votes)
    if not votes:
        raise ValueError("majority_vote needs at least one vote")
    ranked = Counter(votes).most_common()
    if len(ranked) > 1 and ranked[0][1] == ranked[1][1]:
        tied = sorted(v for v, c in ranked if c == ranked[0][1])
        raise TieError(f"tied plurality between {tied}")
    return ranked[0][0]


def ingest(path) -> Corpus:
    """Load a CSV with header ``id,text[,label,source,votes]``.

    Votes are ``;``-separated.  A missing label is resolved from the votes;
    tied votes leave the document unlabeled and flagged.  Rows without text
    are rejected and recorded; structurally malformed rows raise
    :class:`IngestError` with the line number.
    """
    corpus = Corpus()
    path = Path(path)
    with path.open(encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = next(reader, None)
        if header is None:
            log.warning("empty corpus file %s", path)
            return corpus
        header = [h.strip() for h in header]
        if "id" not in header or "text" not in header:
            raise IngestError(1, "header must contain id and text columns")
        col = {name: i for i, name in enumerate(header)}
        seen = set()
        for row in reader:
            line = reader.line_num
            if not row:
                continue
            if len(row) != len(header):
                raise IngestError(line, f"expected {len(header)} fields, got {len(row)}")
            get = lambda name: row[col[name]].strip() if name in col else ""
            doc_id, text = get("id"), row[col["text"]]
            if not doc_id:
                raise IngestError(line, "missing id")
            if doc_id in seen:
                raise IngestError(line, f"duplicate id {doc_id!r}")
            if not text.strip():
                corpus.rejected.append((line, "missing text"))
                log.warning("line %d: rejected row %s with empty text", line, doc_id)
                continue
            votes = tuple(v.strip() for v in get("votes").split(";") if v.strip())
            label = get("label") or None
            try:
                for v in votes:
                    if v not in CATEGORIES:
                        raise ValueError(f"unknown category {v!r} in votes")
                if label is None and votes:
                    try:
                        label = majority_vote(votes)
                    except TieError:
                        corpus.flagged.append(doc_id)
                doc = Document(doc_id, text, label, get("source"), votes)
            except ValueError as exc:
                raise IngestError(line, str(exc)) from None
            seen.add(doc_id)
            corpus.documents.append(doc)
    if not corpus.documents:
        log.warning("no documents loaded from %s", path)
    return corpus


def _dedupe_key(text: str) -> str:
    return hashlib.sha256(clean_text(text).casefold().encode("utf-8")).hexdigest()


def dedupe(corpus: Corpus) -> Corpus:
    """Drop documents whose normalized text repeats an earlier document."""
    seen, kept = set(), []
    for doc in corpus.documents:
        key = _dedupe_key(doc.text)
        if key not in seen:
            seen.add(key)
            kept.append(doc)
    dropped = len(corpus.documents) - len(kept)
    if dropped:
        log.info("dedupe removed %d documents", dropped)
    kept_ids = {d.id for d in kept}
    return Corpus(kept, [i for i in corpus.flagged if i in kept_ids], list(corpus.rejected))


def split_long_document(doc: Document, max_words: int = DEFAULT_MAX_WORDS) -> list:
    """Pack whole sentences greedily into chunks of at most ``max_words`` words."""
    if max_words < 1:
        raise ValueError("max_words must be >= 1")
    if len(doc.text.split()) <= max_words:
        return [doc]
    chunks, current, size = [], [], 0
    for sentence in split_sentences(doc.text):
        words = sentence.split()
        if len(words) > max_words:
            log.warning("%s: sentence of %d words hard-split at word boundaries",
                        doc.id, len(words))
            if current:
                chunks.append(current)
                current, size = [], 0
            for start in range(0, len(words), max_words):
                piece = words[start:start + max_words]
                if len(piece) == max_words:
                    chunks.append([" ".join(piece)])
                else:
                    current, size = [" ".join(piece)], len(piece)
            continue
        if size + len(words) > max_words:
            chunks.append(current)
            current, size = [], 0
        current.append(sentence)
        size += len(words)
    if current:
        chunks.append(current)
    return [Document(f"{doc.id}#{k}", " ".join(parts), doc.label, doc.source, doc.votes)
            for k, parts in enumerate(chunks, start=1)]


def split_long_documents(corpus: Corpus, max_words: int = DEFAULT_MAX_WORDS) -> Corpus:
    docs = [child for d in corpus.documents for child in split_long_document(d, max_words)]
    return Corpus(docs, list(corpus.flagged), list(corpus.rejected))


def _largest_remainder(n: int, fractions) -> list:
    exact = [n * f for f in fractions]
    counts = [int(np.floor(x)) for x in exact]
    order = sorted(range(len(fractions)), key=lambda i: (-(exact[i] - counts[i]), i))
    for i in order[:n - sum(counts)]:
        counts[i] += 1
    return counts


def stratified_split(documents, fractions=DEFAULT_FRACTIONS, seed: int = 0) -> dict:
    """Assign every document id to train / validation / test, class by class.

    Within a class, ids are sorted, shuffled with ``seed`` and cut at
    largest-remainder rounded counts, so the result does not depend on input
    order.
    """
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise ValueError("split fractions must sum to 1")
    documents = list(documents)
    by_class = {}
    for d in documents:
        if d.label is None:
            raise ValueError(f"document {d.id} is unlabeled")
        by_class.setdefault(d.label, []).append(d.id)
    rng = np.random.default_rng(seed)
    assignment = {}
    for label in sorted(by_class):
        ids = sorted(by_class[label])
        if len(ids) < 3:
            raise ValueError(f"class {label!r} has {len(ids)} documents; at least 3 required")
        ids = [ids[i] for i in rng.permutation(len(ids))]
        start = 0
        for part, count in zip(PARTITIONS, _largest_remainder(len(ids), fractions)):
            for doc_id in ids[start:start + count]:
                assignment[doc_id] = part
            start += count
    return assignment


def class_weights(counts) -> np.ndarray:
    """Balanced weights N / (K * n_c); rarer classes weigh more."""
    counts = np.asarray(list(counts.values()) if isinstance(counts, dict) else counts, float)
    if counts.size == 0 or (counts < 1).any():
        raise ValueError("every class needs at least one training document")
    return counts.sum() / (len(counts) * counts)


def write_documents(path, documents) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for d in documents:
            f.write(json.dumps(d.to_dict(), ensure_ascii=False) + "\n")


def read_documents(path) -> list:
    with open(path, encoding="utf-8") as f:
        return [Document.from_dict(json.loads(line)) for line in f if line.strip()]
