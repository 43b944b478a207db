import itertools
import logging
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, strategies as st

from genfeat import corpus as cp
from genfeat.corpus import CATEGORIES, Document

A, B, C = CATEGORIES[:3]


def write_csv(path, text):
    path.write_text(text, encoding="utf-8")
    return path


class TestIngest:
    def test_basic_and_votes(self, tmp_path):
        path = write_csv(tmp_path / "c.csv",
                         "id,text,label,source,votes\n"
                         f"d1,প্রথম লেখা।,{A},x.com,\n"
                         f"d2,দ্বিতীয় লেখা।,,y.com,{B};{B};{A}\n"
                         f"d3,তৃতীয় লেখা।,,y.com,{A};{A};{B};{B};{C}\n")
        c = cp.ingest(path)
        assert [d.label for d in c] == [A, B, None]
        assert c.flagged == ["d3"]
        assert c.documents[1].votes == (B, B, A)

    def test_missing_text_rejected(self, tmp_path):
        path = write_csv(tmp_path / "c.csv", "id,text\nd1,hello\nd2,  \n")
        c = cp.ingest(path)
        assert len(c) == 1 and c.rejected == [(3, "missing text")]

    def test_malformed_row_line_number(self, tmp_path):
        path = write_csv(tmp_path / "c.csv", "id,text,label\nd1,ok,\nd2,too,many,fields\n")
        with pytest.raises(cp.IngestError) as exc:
            cp.ingest(path)
        assert exc.value.line == 3

    def test_unknown_category(self, tmp_path):
        path = write_csv(tmp_path / "c.csv", "id,text,label\nd1,ok,Weather\n")
        with pytest.raises(cp.IngestError):
            cp.ingest(path)

    def test_empty_file_warns(self, tmp_path, caplog):
        path = write_csv(tmp_path / "c.csv", "")
        with caplog.at_level(logging.WARNING):
            assert len(cp.ingest(path)) == 0
        assert "empty" in caplog.text

    def test_stats(self):
        docs = [Document("a", "এক দুই। তিন।", A), Document("b", "চার পাঁচ ছয় সাত।", A),
                Document("c", "আট।", B)]
        s = cp.Corpus(docs).stats()
        assert s[A]["documents"] == 2
        assert s[A]["words"] == pytest.approx(3.5)
        assert s[A]["sentences"] == pytest.approx(1.5)
        assert "Avg words" in cp.Corpus(docs).stats_table()


class TestDedupe:
    def test_identical(self):
        docs = [Document("a", "same text"), Document("b", "same text")]
        assert [d.id for d in cp.dedupe(cp.Corpus(docs))] == ["a"]

    def test_punctuation_and_whitespace(self):
        docs = [Document("a", "Hello,   world!"), Document("b", "hello world")]
        assert [d.id for d in cp.dedupe(cp.Corpus(docs))] == ["a"]

    def test_distinct_unchanged(self):
        docs = [Document(str(i), f"text {w}") for i, w in enumerate("abc")]
        assert len(cp.dedupe(cp.Corpus(docs))) == 3

    @given(st.lists(st.sampled_from(["x y", "x, y", "z", "Z!", "বই", "বই।"]), max_size=12))
    def test_idempotent_and_shrinking(self, texts):
        c = cp.Corpus([Document(str(i), t) for i, t in enumerate(texts)])
        once = cp.dedupe(c)
        assert len(once) <= len(c)
        assert [d.id for d in cp.dedupe(once)] == [d.id for d in once]


class TestSplitLong:
    def test_short_unchanged(self):
        doc = Document("d", " ".join(["w"] * 150) + "।", A)
        assert cp.split_long_document(doc, 200) == [doc]

    def test_greedy_packing(self):
        sentence = " ".join(["w"] * 10) + "।"
        doc = Document("d", " ".join([sentence] * 45), A)
        chunks = cp.split_long_document(doc, 200)
        assert [len(c.text.split()) for c in chunks] == [200, 200, 50]
        assert [c.id for c in chunks] == ["d#1", "d#2", "d#3"]
        assert all(c.label == A for c in chunks)

    def test_hard_split_warns(self, caplog):
        doc = Document("d", " ".join(f"w{i}" for i in range(25)), A)
        with caplog.at_level(logging.WARNING):
            chunks = cp.split_long_document(doc, 10)
        assert [len(c.text.split()) for c in chunks] == [10, 10, 5]
        assert "hard-split" in caplog.text

    @given(st.lists(st.integers(1, 30), min_size=1, max_size=20), st.integers(1, 40))
    def test_words_preserved_in_order(self, lengths, max_words):
        counter = itertools.count()
        text = " ".join(" ".join(f"w{next(counter)}" for _ in range(n)) + "।" for n in lengths)
        doc = Document("d", text)
        chunks = cp.split_long_document(doc, max_words)
        joined = " ".join(c.text for c in chunks)
        assert joined.split() == text.split()
        assert all(len(c.text.split()) <= max_words for c in chunks)

    def test_invalid_max(self):
        with pytest.raises(ValueError):
            cp.split_long_document(Document("d", "x"), 0)


class TestMajorityVote:
    def test_examples(self):
        assert cp.majority_vote([A, A, A, B, C]) == A
        assert cp.majority_vote([A]) == A
        with pytest.raises(cp.TieError):
            cp.majority_vote([A, A, B, B, C])

    def test_empty(self):
        with pytest.raises(ValueError):
            cp.majority_vote([])

    @given(st.lists(st.sampled_from(CATEGORIES[:4]), min_size=1, max_size=5), st.randoms())
    def test_permutation_invariant(self, votes, rnd):
        shuffled = list(votes)
        rnd.shuffle(shuffled)
        try:
            first = cp.majority_vote(votes)
        except cp.TieError:
            with pytest.raises(cp.TieError):
                cp.majority_vote(shuffled)
        else:
            assert cp.majority_vote(shuffled) == first


class TestStratifiedSplit:
    def _docs(self, counts):
        return [Document(f"{label[:3]}{i:03d}", "t", label)
                for label, n in zip(CATEGORIES, counts) for i in range(n)]

    def test_rounding_example(self):
        docs = self._docs([50, 30, 20])
        split = cp.stratified_split(docs, seed=0)
        table = Counter((d.label, split[d.id]) for d in docs)
        for label, expected in zip(CATEGORIES, [(35, 5, 10), (21, 3, 6), (14, 2, 4)]):
            assert tuple(table[(label, p)] for p in cp.PARTITIONS) == expected

    def test_same_seed_same_assignment(self):
        docs = self._docs([12, 9])
        assert cp.stratified_split(docs, seed=4) == cp.stratified_split(docs[::-1], seed=4)

    def test_exhaustive_disjoint(self):
        docs = self._docs([10, 7, 5])
        split = cp.stratified_split(docs, seed=1)
        assert set(split) == {d.id for d in docs}
        assert set(split.values()) <= set(cp.PARTITIONS)

    def test_small_class(self):
        with pytest.raises(ValueError):
            cp.stratified_split(self._docs([10, 2]))

    def test_unlabeled(self):
        with pytest.raises(ValueError):
            cp.stratified_split([Document("a", "t")] * 3)


class TestClassWeights:
    def test_formula(self):
        np.testing.assert_allclose(cp.class_weights([10, 10, 20]), [4 / 3, 4 / 3, 2 / 3])

    def test_uniform(self):
        np.testing.assert_allclose(cp.class_weights({"a": 5, "b": 5}), [1.0, 1.0])

    @given(st.lists(st.integers(1, 1000), min_size=1, max_size=7))
    def test_identity(self, counts):
        w = cp.class_weights(counts)
        assert float(np.dot(counts, w)) == pytest.approx(sum(counts))

    def test_zero_count(self):
        with pytest.raises(ValueError):
            cp.class_weights([3, 0])


class TestPersistence:
    def test_round_trip(self, tmp_path):
        docs = [Document("a#1", "লেখা", A, "s", (A, B))]
        cp.write_documents(tmp_path / "d.jsonl", docs)
        assert cp.read_documents(tmp_path / "d.jsonl") == docs
