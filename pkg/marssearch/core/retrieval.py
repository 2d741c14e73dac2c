"""Desk-scale retrieval: tokenizer, inverted index, BM25, corpus files."""

import heapq
import json
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from itertools import islice
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Set, Tuple

import numpy as np

from marssearch.core.config import BM25Params, CorpusSynthConfig
from marssearch.core.models import Corpus, Document, Topic
from marssearch.utils.io import atomic_write_text, read_lines
from marssearch.utils.logger import logger

TOKEN_RE = re.compile(r"[^\W_]+")

Qrels = Dict[str, Set[str]]


class DuplicateDocumentError(ValueError):
    """Two documents share a docid."""


def tokenize(text: str) -> List[str]:
    """Lowercase and split on anything that is not a letter or digit."""
    return TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class InvertedIndex:
    """Immutable term -> [(docid, tf)] index with BM25 statistics."""

    postings: Dict[str, List[Tuple[str, int]]]
    doc_lengths: Dict[str, int]
    df: Dict[str, int]
    n_docs: int
    avgdl: float

    def __contains__(self, docid: str) -> bool:
        return docid in self.doc_lengths

    def idf(self, term: str) -> float:
        df = self.df.get(term, 0)
        return math.log(1.0 + (self.n_docs - df + 0.5) / (df + 0.5))


def _documents(corpus: Corpus | Iterable[Document]) -> List[Document]:
    return list(corpus.documents) if isinstance(corpus, Corpus) else list(corpus)


def build_index(corpus: Corpus | Iterable[Document]) -> InvertedIndex:
    documents = _documents(corpus)
    if not documents:
        raise ValueError("Cannot index an empty corpus")

    postings: Dict[str, List[Tuple[str, int]]] = defaultdict(list)
    doc_lengths: Dict[str, int] = {}
    for doc in documents:
        if doc.docid in doc_lengths:
            raise DuplicateDocumentError(f"Duplicate docid: '{doc.docid}'")
        counts = Counter(tokenize(doc.text))
        doc_lengths[doc.docid] = sum(counts.values())
        for term, tf in counts.items():
            postings[term].append((doc.docid, tf))

    for plist in postings.values():
        plist.sort()

    n_docs = len(doc_lengths)
    index = InvertedIndex(
        postings=dict(postings),
        doc_lengths=doc_lengths,
        df={term: len(plist) for term, plist in postings.items()},
        n_docs=n_docs,
        avgdl=sum(doc_lengths.values()) / n_docs,
    )
    logger.debug(f"Indexed {n_docs} documents, {len(index.postings)} terms")
    return index


def bm25_term_weight(index: InvertedIndex, term: str, tf: int, doc_len: int, params: BM25Params) -> float:
    if tf <= 0:
        return 0.0
    norm = params.k1 * (1.0 - params.b + params.b * doc_len / index.avgdl) if index.avgdl else 0.0
    return index.idf(term) * tf * (params.k1 + 1.0) / (tf + norm)


def bm25_search(
    index: InvertedIndex,
    query: str,
    k: int,
    params: BM25Params = BM25Params(),
) -> List[Tuple[str, float]]:
    """Top-k (docid, score) by BM25, score descending then docid ascending."""
    if k < 1:
        raise ValueError(f"Invalid k: {k} (must be >= 1)")

    scores: Dict[str, float] = defaultdict(float)
    for term in tokenize(query):
        for docid, tf in index.postings.get(term, ()):
            scores[docid] += bm25_term_weight(index, term, tf, index.doc_lengths[docid], params)

    return heapq.nsmallest(k, scores.items(), key=lambda item: (-item[1], item[0]))


def ranked_docids(
    index: InvertedIndex, query: str, k: int, params: BM25Params = BM25Params()
) -> List[str]:
    """BM25 top-k docids, padded with unscored documents in docid order.

    The padding makes the ranking total, so k >= |index| returns every
    document and a shorter ranking is always a prefix of a longer one.
    """
    ranked = [docid for docid, _ in bm25_search(index, query, k, params)]
    if len(ranked) < k:
        scored = set(ranked)
        rest = (docid for docid in sorted(index.doc_lengths) if docid not in scored)
        ranked.extend(islice(rest, k - len(ranked)))
    return ranked


# ---------------------------------------------------------------------------
# Corpus and qrels files
# ---------------------------------------------------------------------------


def save_corpus(corpus: Corpus, file_path: str | Path) -> Path:
    """Write topics then documents as JSON lines."""
    lines = [
        json.dumps({"kind": "topic", **topic.model_dump()}, sort_keys=True, ensure_ascii=False)
        for topic in corpus.topics
    ]
    lines.extend(
        json.dumps(
            {"kind": "doc", **doc.model_dump(exclude={"word_count"})},
            sort_keys=True,
            ensure_ascii=False,
        )
        for doc in corpus.documents
    )
    path = atomic_write_text(file_path, "\n".join(lines) + "\n")
    logger.info(f"Saved corpus of {len(corpus.documents)} documents to {path}")
    return path


def load_corpus(file_path: str | Path) -> Corpus:
    topics, documents = [], []
    for number, line in enumerate(read_lines(file_path), 1):
        record = json.loads(line)
        kind = record.pop("kind", "doc")
        if kind == "topic":
            topics.append(Topic.model_validate(record))
        elif kind == "doc":
            documents.append(Document.model_validate(record))
        else:
            raise ValueError(f"{file_path}:{number}: unknown record kind '{kind}'")
    logger.info(f"Loaded corpus of {len(documents)} documents from {file_path}")
    return Corpus(documents=documents, topics=topics)


def qrels_from_corpus(corpus: Corpus) -> Qrels:
    qrels: Qrels = {topic.id: set() for topic in corpus.topics}
    for doc in corpus.documents:
        for topic in doc.relevant:
            qrels.setdefault(topic, set()).add(doc.docid)
    return qrels


def save_qrels(corpus: Corpus, file_path: str | Path) -> Path:
    """TREC qrels: `topic 0 docid rel`, judged non-relevant rows included."""
    rows = []
    for doc in corpus.documents:
        rows.extend(f"{topic} 0 {doc.docid} 1" for topic in doc.relevant)
        rows.extend(f"{topic} 0 {doc.docid} 0" for topic in doc.nonrelevant)
    rows.sort(key=lambda row: (row.split()[0], row.split()[2]))
    return atomic_write_text(file_path, "\n".join(rows) + ("\n" if rows else ""))


def load_qrels(file_path: str | Path) -> Qrels:
    qrels: Qrels = {}
    for number, line in enumerate(read_lines(file_path), 1):
        parts = line.split()
        if len(parts) != 4:
            raise ValueError(f"{file_path}:{number}: expected 'topic iter docid rel'")
        topic, _, docid, rel = parts
        relevant = qrels.setdefault(topic, set())
        if int(rel) > 0:
            relevant.add(docid)
    return qrels


# ---------------------------------------------------------------------------
# Synthetic corpus
# ---------------------------------------------------------------------------

_CONSONANTS = "bcdfghjklmnprstvwz"
_VOWELS = "aeiou"


def _make_words(rng: np.random.Generator, n: int, taken: Set[str]) -> List[str]:
    words: List[str] = []
    while len(words) < n:
        syllables = int(rng.integers(2, 5))
        word = "".join(
            _CONSONANTS[int(rng.integers(len(_CONSONANTS)))] + _VOWELS[int(rng.integers(len(_VOWELS)))]
            for _ in range(syllables)
        )
        if word not in taken:
            taken.add(word)
            words.append(word)
    return words


def _zipf(n: int) -> np.ndarray:
    weights = 1.0 / np.arange(1, n + 1)
    return weights / weights.sum()


def _draw(rng: np.random.Generator, vocab: Sequence[str], p: np.ndarray | None, size: int) -> List[str]:
    if size <= 0 or not vocab:
        return []
    return [vocab[i] for i in rng.choice(len(vocab), size=size, p=p)]


def synthesize_corpus(config: CorpusSynthConfig) -> Corpus:
    """A labelled corpus in generation ("chronological") order.

    Relevant documents mix their topic vocabulary with a shared "quality"
    vocabulary; spam documents use a spam vocabulary; everything else is
    Zipfian background, sometimes with a few stray topic words.
    """
    rng = np.random.default_rng(config.seed)
    taken: Set[str] = set()
    background = _make_words(rng, config.background_vocab_size, taken)
    quality_words = _make_words(rng, 80, taken)
    spam_words = _make_words(rng, 60, taken)
    topic_vocab = [_make_words(rng, config.topic_vocab_size, taken) for _ in range(config.n_topics)]
    bg_p = _zipf(len(background))

    topics = [
        Topic(id=f"t{j + 1}", description=" ".join(vocab[:4]))
        for j, vocab in enumerate(topic_vocab)
    ]

    n_rel = round(config.prevalence * config.n_docs)
    n_spam = round(config.spam_fraction * config.n_docs)
    order = rng.permutation(config.n_docs)
    role: Dict[int, str] = {}
    cursor = 0
    for topic in topics:
        for i in order[cursor : cursor + n_rel]:
            role[int(i)] = topic.id
        cursor += n_rel
    for i in order[cursor : cursor + n_spam]:
        role[int(i)] = "spam"

    sigma = 0.5
    mu = math.log(config.mean_length) - sigma**2 / 2
    documents = []
    for i in range(config.n_docs):
        length = max(20, int(rng.lognormal(mu, sigma)))
        label = role.get(i)
        relevant: List[str] = []
        nonrelevant: List[str] = []
        spam = label == "spam"

        if spam:
            n_special = int(0.4 * length)
            words = _draw(rng, spam_words, None, n_special)
        elif label is not None:
            j = int(label[1:]) - 1
            n_topic, n_quality = int(0.25 * length), int(0.15 * length)
            words = _draw(rng, topic_vocab[j], None, n_topic) + _draw(rng, quality_words, None, n_quality)
            relevant = [label]
        else:
            words = _draw(rng, quality_words, None, int(0.03 * length))
            if topic_vocab and rng.random() < 0.1:
                stray = topic_vocab[int(rng.integers(len(topic_vocab)))]
                words += _draw(rng, stray, None, int(0.05 * length))
            if topics and rng.random() < config.judged_fraction:
                nonrelevant = [topics[int(rng.integers(len(topics)))].id]

        words += _draw(rng, background, bg_p, length - len(words))
        rng.shuffle(words)
        documents.append(
            Document(
                docid=f"d{i:06d}",
                text=" ".join(words),
                relevant=relevant,
                nonrelevant=nonrelevant,
                spam=spam,
            )
        )

    logger.info(
        f"Synthesized {config.n_docs} documents over {config.n_topics} topics "
        f"({n_rel} relevant per topic, {n_spam} spam)"
    )
    return Corpus(documents=documents, topics=topics)
