"""Content-only static ranking and Mars cache selection.

The model is a logistic regression over hashed character n-grams, trained
by online gradient steps at a fixed learning rate. Scores are computed once
per corpus and are never query-dependent.
"""

import math
from dataclasses import dataclass, field
from typing import Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import sparse
from sklearn.feature_extraction.text import HashingVectorizer
from sklearn.linear_model import SGDClassifier
from sklearn.metrics import roc_auc_score

from marssearch.core.config import DEFAULT_CACHE_FRACTIONS, QualityParams, TRAINING_NEGATIVE_SAMPLE
from marssearch.core.models import CacheHitReport, Corpus, Document, SessionLog
from marssearch.utils.logger import logger

TextLike = Document | str


class SingleClassError(ValueError):
    """Training needs at least one positive and one negative example."""


def make_vectorizer(params: QualityParams) -> HashingVectorizer:
    """Binary, L2-normalised hashed character n-grams."""
    return HashingVectorizer(
        analyzer="char",
        ngram_range=(params.ngram, params.ngram),
        n_features=params.n_features,
        alternate_sign=False,
        binary=True,
        norm="l2",
        lowercase=True,
    )


def fit_linear(X: sparse.csr_matrix, y: np.ndarray, params: QualityParams) -> SGDClassifier:
    """Online logistic regression: `params.passes` shuffled passes over (X, y)."""
    if len(np.unique(y)) < 2:
        raise SingleClassError("Training data holds a single class")

    rng = np.random.default_rng(params.seed)
    classifier = SGDClassifier(
        loss="log_loss",
        penalty=None,
        learning_rate="constant",
        eta0=params.learning_rate,
        shuffle=False,
    )
    for _ in range(params.passes):
        order = rng.permutation(len(y))
        classifier.partial_fit(X[order], y[order], classes=np.array([0, 1]))
    return classifier


def _text(item: TextLike) -> str:
    return item.text if isinstance(item, Document) else item


@dataclass
class QualityModel:
    params: QualityParams
    classifier: SGDClassifier
    vectorizer: HashingVectorizer = field(repr=False)

    def score(self, items: Iterable[TextLike]) -> np.ndarray:
        """Higher is better quality."""
        texts = [_text(item) for item in items]
        if not texts:
            return np.zeros(0)
        return self.classifier.decision_function(self.vectorizer.transform(texts))


def train_quality(
    positives: Sequence[TextLike],
    negatives: Sequence[TextLike],
    params: QualityParams = QualityParams(),
) -> QualityModel:
    if not positives or not negatives:
        raise SingleClassError(
            f"Need both classes, got {len(positives)} positives and {len(negatives)} negatives"
        )

    vectorizer = make_vectorizer(params)
    X = vectorizer.transform([_text(item) for item in [*positives, *negatives]])
    y = np.array([1] * len(positives) + [0] * len(negatives))
    classifier = fit_linear(X, y, params)
    logger.info(f"Trained quality model on {len(positives)} positives, {len(negatives)} negatives")
    return QualityModel(params=params, classifier=classifier, vectorizer=vectorizer)


def build_training_set(
    corpus: Corpus, n_negatives: int = TRAINING_NEGATIVE_SAMPLE, seed: int = 0
) -> Tuple[List[Document], List[Document]]:
    """Positives: relevant to any topic. Negatives: all spam plus a seeded
    sample of `n_negatives` judged non-relevant documents."""
    positives = [doc for doc in corpus.documents if doc.relevant]
    spam = [doc for doc in corpus.documents if doc.spam and not doc.relevant]
    judged = [
        doc for doc in corpus.documents if doc.nonrelevant and not doc.relevant and not doc.spam
    ]

    rng = np.random.default_rng(seed)
    size = min(n_negatives, len(judged))
    picked = sorted(rng.choice(len(judged), size=size, replace=False)) if size else []
    negatives = spam + [judged[i] for i in picked]
    logger.debug(
        f"Training set: {len(positives)} positives, {len(spam)} spam, {size} sampled non-relevant"
    )
    return positives, negatives


def evaluate_quality(
    model: QualityModel, positives: Sequence[TextLike], negatives: Sequence[TextLike]
) -> float:
    """ROC AUC of the model separating positives from negatives."""
    scores = np.concatenate([model.score(positives), model.score(negatives)])
    labels = np.array([1] * len(positives) + [0] * len(negatives))
    return float(roc_auc_score(labels, scores))


def static_rank(model: QualityModel, corpus: Corpus) -> List[str]:
    """Docids by quality descending, ties by docid."""
    docids = np.array([doc.docid for doc in corpus.documents])
    scores = model.score(corpus.documents)
    return [str(docids[i]) for i in np.lexsort((docids, -scores))]


def annotate_quality(corpus: Corpus, model: QualityModel) -> Corpus:
    """Copy of the corpus with each document's quality set to its model score."""
    scores = model.score(corpus.documents)
    documents = [
        doc.model_copy(update={"quality": float(score)})
        for doc, score in zip(corpus.documents, scores)
    ]
    return corpus.model_copy(update={"documents": documents})


def _cache_size(fraction: float, n: int) -> int:
    if not 0.0 <= fraction <= 1.0:
        raise ValueError(f"Invalid cache fraction: {fraction} (must be in [0, 1])")
    # tolerance absorbs binary rounding, e.g. 0.29 * 100
    return min(n, math.floor(fraction * n + 1e-9))


def select_from_ranking(ranking: Sequence[str], fraction: float) -> Set[str]:
    return set(ranking[: _cache_size(fraction, len(ranking))])


def select_cache(model: QualityModel, corpus: Corpus, fraction: float) -> Set[str]:
    """The top floor(fraction * |corpus|) documents by static rank."""
    _cache_size(fraction, len(corpus.documents))
    return select_from_ranking(static_rank(model, corpus), fraction)


def cache_hit_ratios(log: SessionLog, cache: Set[str], fraction: Optional[float] = None) -> CacheHitReport:
    """Cached share of clicked pages and of SERP pages, distinct per session."""
    report = CacheHitReport(fraction=fraction)
    for session in log.sessions:
        clicked = {c.docid for i in session.interactions for c in i.clicks}
        linked = {d for i in session.interactions for d in i.result_docids}
        report.clicked_total += len(clicked)
        report.clicked_hits += len(clicked & cache)
        report.serp_total += len(linked)
        report.serp_hits += len(linked & cache)
    return report


def cache_hit_curve(
    log: SessionLog, ranking: Sequence[str], fractions: Sequence[float] = DEFAULT_CACHE_FRACTIONS
) -> List[CacheHitReport]:
    reports = []
    for fraction in fractions:
        report = cache_hit_ratios(log, select_from_ranking(ranking, fraction), fraction)
        logger.info(
            f"Cache {fraction:.2%}: clicked hit ratio {report.clicked_hit_ratio}, "
            f"SERP hit ratio {report.serp_hit_ratio}"
        )
        reports.append(report)
    return reports
