"""Tests for the inverted index, BM25 and corpus files."""

import math
from collections import Counter

import numpy as np
import pytest

from marssearch.core.config import BM25Params, CorpusSynthConfig
from marssearch.core.models import Corpus, Document
from marssearch.core.retrieval import (
    DuplicateDocumentError,
    bm25_search,
    build_index,
    load_corpus,
    load_qrels,
    qrels_from_corpus,
    ranked_docids,
    save_corpus,
    save_qrels,
    synthesize_corpus,
    tokenize,
)

VOCAB = [f"w{i}" for i in range(30)]


@pytest.fixture(scope="module")
def random_corpus():
    """100 documents over a 30-word vocabulary, lengths 0 to 40."""
    rng = np.random.default_rng(42)
    documents = []
    for i in range(100):
        words = [VOCAB[j] for j in rng.integers(len(VOCAB), size=int(rng.integers(0, 41)))]
        documents.append(Document(docid=f"doc{i:03d}", text=" ".join(words)))
    return Corpus(documents=documents)


def exhaustive_bm25(corpus, query, params=BM25Params()):
    """Score every document directly from its term counts."""
    counts = {doc.docid: Counter(tokenize(doc.text)) for doc in corpus.documents}
    n = len(counts)
    avgdl = sum(sum(c.values()) for c in counts.values()) / n
    scores = {}
    for docid, tf_map in counts.items():
        dl = sum(tf_map.values())
        score, matched = 0.0, False
        for term in tokenize(query):
            tf = tf_map.get(term, 0)
            if tf <= 0:
                continue
            matched = True
            df = sum(1 for c in counts.values() if term in c)
            idf = math.log(1.0 + (n - df + 0.5) / (df + 0.5))
            norm = params.k1 * (1.0 - params.b + params.b * dl / avgdl)
            score += idf * tf * (params.k1 + 1.0) / (tf + norm)
        if matched:
            scores[docid] = score
    return sorted(scores.items(), key=lambda item: (-item[1], item[0]))


class TestTokenize:
    """Tests for the tokenizer."""

    def test_lowercase_and_split(self):
        """Test that tokens are lowercased and split on punctuation."""
        assert tokenize("Mars-Rover, 2024!") == ["mars", "rover", "2024"]

    def test_unicode(self):
        """Test that non-ASCII letters stay inside tokens."""
        assert tokenize("Éole naïve_test") == ["éole", "naïve", "test"]


class TestBuildIndex:
    """Tests for index construction."""

    def test_single_document(self):
        """Test postings for one document "a b a"."""
        index = build_index([Document(docid="d", text="a b a")])
        assert index.postings == {"a": [("d", 2)], "b": [("d", 1)]}
        assert index.doc_lengths == {"d": 3}
        assert index.avgdl == 3.0

    def test_empty_document(self):
        """Test that an empty document has length 0 and no postings."""
        index = build_index([Document(docid="e", text=""), Document(docid="f", text="x")])
        assert index.doc_lengths["e"] == 0
        assert all(docid != "e" for plist in index.postings.values() for docid, _ in plist)
        assert "e" in index

    def test_brute_force_postings(self, random_corpus):
        """Test that postings equal direct term counting."""
        index = build_index(random_corpus)
        expected = {}
        for doc in random_corpus.documents:
            for term, tf in Counter(tokenize(doc.text)).items():
                expected.setdefault(term, []).append((doc.docid, tf))
        assert index.postings == {term: sorted(plist) for term, plist in expected.items()}
        assert index.n_docs == 100
        assert index.df == {term: len(plist) for term, plist in expected.items()}

    def test_rebuild_is_identical(self, random_corpus):
        """Test that building twice gives the same statistics."""
        assert build_index(random_corpus) == build_index(random_corpus)

    def test_duplicate_docid(self):
        """Test that a repeated docid is refused."""
        with pytest.raises(DuplicateDocumentError):
            build_index([Document(docid="d", text="a"), Document(docid="d", text="b")])

    def test_empty_corpus(self):
        """Test that an empty corpus cannot be indexed."""
        with pytest.raises(ValueError):
            build_index([])


class TestBM25:
    """Tests for BM25 ranking."""

    def test_single_match_ranks_first(self):
        """Test that the only matching document is returned."""
        index = build_index([Document(docid="a", text="olympus mons"), Document(docid="b", text="valles")])
        assert [d for d, _ in bm25_search(index, "olympus", 10)] == ["a"]

    def test_absent_term(self):
        """Test that an unknown term contributes nothing."""
        index = build_index([Document(docid="a", text="olympus mons")])
        assert bm25_search(index, "phobos", 5) == []
        assert bm25_search(index, "", 5) == []

    def test_invalid_k(self):
        """Test that k must be positive."""
        index = build_index([Document(docid="a", text="x")])
        with pytest.raises(ValueError):
            bm25_search(index, "x", 0)

    @pytest.mark.parametrize("query", ["w1", "w2 w7", "w3 w3 w11", "w0 w5 w9 w29"])
    @pytest.mark.parametrize("k", [1, 5, 20, 100])
    def test_matches_exhaustive_scoring(self, random_corpus, query, k):
        """Test that top-k equals scoring every document."""
        index = build_index(random_corpus)
        result = bm25_search(index, query, k)
        expected = exhaustive_bm25(random_corpus, query)[:k]
        assert [d for d, _ in result] == [d for d, _ in expected]
        assert [s for _, s in result] == pytest.approx([s for _, s in expected], rel=1e-12)

    def test_tf_monotone(self):
        """Test that more occurrences of the query term never lower the score."""
        docs = [Document(docid=f"d{tf}", text=" ".join(["rover"] * tf + ["pad"] * (10 - tf))) for tf in range(1, 6)]
        docs.append(Document(docid="z", text="other words only here"))
        scores = dict(bm25_search(build_index(docs), "rover", 10))
        values = [scores[f"d{tf}"] for tf in range(1, 6)]
        assert values == sorted(values)

    def test_ranked_docids_padding(self, random_corpus):
        """Test that rankings pad with unscored docids and stay prefix-consistent."""
        index = build_index(random_corpus)
        full = ranked_docids(index, "w4", 100)
        assert sorted(full) == sorted(doc.docid for doc in random_corpus.documents)
        assert ranked_docids(index, "w4", 30) == full[:30]
        scored = [d for d, _ in bm25_search(index, "w4", 100)]
        assert full[: len(scored)] == scored
        assert full[len(scored) :] == sorted(full[len(scored) :])


class TestCorpusFiles:
    """Tests for corpus and qrels persistence."""

    def test_corpus_round_trip(self, tmp_path, tiny_corpus):
        """Test that topics and documents survive JSONL."""
        path = save_corpus(tiny_corpus, tmp_path / "corpus.jsonl")
        assert load_corpus(path) == tiny_corpus

    def test_unknown_record_kind(self, tmp_path):
        """Test that an unknown record kind names the line."""
        path = tmp_path / "bad.jsonl"
        path.write_text('{"kind": "image", "docid": "x"}\n', encoding="utf-8")
        with pytest.raises(ValueError, match="bad.jsonl:1"):
            load_corpus(path)

    def test_word_count_checked(self):
        """Test that a stated word count must match the text."""
        with pytest.raises(ValueError):
            Document(docid="d", text="two words", word_count=3)

    def test_qrels_round_trip(self, tmp_path, tiny_corpus):
        """Test that saved qrels reload to the corpus labels."""
        path = save_qrels(tiny_corpus, tmp_path / "qrels.txt")
        assert load_qrels(path) == {"t1": {"d1", "d2"}, "t2": {"d4"}}
        assert qrels_from_corpus(tiny_corpus) == {"t1": {"d1", "d2"}, "t2": {"d4"}}

    def test_qrels_bad_line(self, tmp_path):
        """Test that a short qrels line is refused."""
        path = tmp_path / "qrels.txt"
        path.write_text("t1 0 d1\n", encoding="utf-8")
        with pytest.raises(ValueError, match="qrels.txt:1"):
            load_qrels(path)


class TestSynthesizeCorpus:
    """Tests for the synthetic corpus."""

    def test_shape(self, synthetic_corpus):
        """Test topic prevalence and spam share."""
        assert len(synthetic_corpus.documents) == 600
        assert [t.id for t in synthetic_corpus.topics] == ["t1", "t2", "t3"]
        qrels = qrels_from_corpus(synthetic_corpus)
        assert all(len(qrels[t]) == 30 for t in ("t1", "t2", "t3"))
        assert sum(doc.spam for doc in synthetic_corpus.documents) == 30

    def test_deterministic(self):
        """Test that one seed gives one corpus."""
        config = CorpusSynthConfig(n_docs=50, n_topics=2, seed=3)
        assert synthesize_corpus(config) == synthesize_corpus(config)

    def test_topic_statement_retrieves_relevant(self, synthetic_corpus, synthetic_index):
        """Test that a topic statement ranks its relevant documents highly."""
        qrels = qrels_from_corpus(synthetic_corpus)
        for topic in synthetic_corpus.topics:
            top = [d for d, _ in bm25_search(synthetic_index, topic.description, 30)]
            assert len(set(top) & qrels[topic.id]) >= 20
