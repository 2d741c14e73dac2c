"""High-recall retrieval from Mars: continuous active learning under latency.

One CAL instance repeatedly retrains a linear classifier on the judgments
so far (the topic statement acting as a relevant seed, plus a fresh random
sample of presumed non-relevant documents) and hands the assessor the
top-scoring batch of unjudged documents. Batches grow as B += ceil(B/10).

Four scenarios are simulated on the kernel's virtual clock:

- earth: judging proceeds back to back on Earth.
- earth-lat: the assessor idles one roundtrip before every batch.
- mars-cache / mars-nocache: a CAL instance on Mars judges from its local
  pool (an optional seed cache plus everything Earth has shipped) while a
  second instance on Earth, trained on the Martian judgments it has
  received, ships its best unshipped documents back.
"""

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy import sparse
from sklearn.feature_extraction.text import HashingVectorizer
from tqdm import tqdm

from marssearch.core.config import (
    READING_INTERCEPT_S,
    READING_SLOPE_S,
    QualityParams,
    RecallConfig,
    RecallScenario,
    ScenarioKind,
    ShippingCadence,
    StopRule,
)
from marssearch.core.kernel import Endpoint, Event, SimKernel
from marssearch.core.models import Corpus, GainCurve, GainPoint, Topic
from marssearch.core.quality import fit_linear, make_vectorizer
from marssearch.core.retrieval import Qrels
from marssearch.utils.logger import logger


class PoolExhausted(Exception):
    """No unjudged documents are left in a CAL instance's pool."""


def reading_time(length: float) -> float:
    """Seconds an assessor needs to judge a document of `length` words."""
    if length < 0:
        raise ValueError(f"Invalid document length: {length}")
    return READING_SLOPE_S * length + READING_INTERCEPT_S


def next_batch_size(b: int) -> int:
    return b + math.ceil(b / 10)


def batch_sizes(n: int) -> List[int]:
    """The first `n` CAL batch sizes: 1, 2, ..., 11, 13, 15, ..."""
    sizes, b = [], 1
    for _ in range(n):
        sizes.append(b)
        b = next_batch_size(b)
    return sizes


@dataclass
class CorpusView:
    """Hashed features and reading times of a corpus, computed once."""

    docids: List[str]
    X: sparse.csr_matrix
    word_counts: np.ndarray
    vectorizer: HashingVectorizer = field(repr=False)
    position: Dict[str, int] = field(default_factory=dict, repr=False)
    docid_rank: np.ndarray = field(default_factory=lambda: np.zeros(0), repr=False)

    @classmethod
    def build(cls, corpus: Corpus, params: QualityParams = QualityParams()) -> "CorpusView":
        vectorizer = make_vectorizer(params)
        docids = [doc.docid for doc in corpus.documents]
        rank = np.empty(len(docids), dtype=np.int64)
        rank[np.argsort(np.array(docids))] = np.arange(len(docids))
        return cls(
            docids=docids,
            X=sparse.csr_matrix(vectorizer.transform([doc.text for doc in corpus.documents])),
            word_counts=np.array([doc.word_count for doc in corpus.documents], dtype=float),
            vectorizer=vectorizer,
            position={docid: i for i, docid in enumerate(docids)},
            docid_rank=rank,
        )

    def __len__(self) -> int:
        return len(self.docids)

    def reading_time(self, docid: str) -> float:
        return reading_time(self.word_counts[self.position[docid]])

    @property
    def expected_reading_time(self) -> float:
        return reading_time(float(self.word_counts.mean())) if len(self) else READING_INTERCEPT_S


class CalState:
    """One continuous active learning instance over a pool of documents."""

    def __init__(
        self,
        view: CorpusView,
        seed_text: str,
        pool: Iterable[str] = (),
        config: RecallConfig = RecallConfig(),
    ):
        self.view = view
        self.config = config
        self.rng = np.random.default_rng(config.seed)
        self.seed_vector = view.vectorizer.transform([seed_text])
        self.labeled: Dict[int, bool] = {}
        self.pool: Set[int] = {view.position[docid] for docid in pool}
        self.batch_size = 1
        self.scores = np.full(len(view), -np.inf)
        self.retrains = 0

    def add_to_pool(self, docids: Iterable[str]) -> None:
        for docid in docids:
            i = self.view.position[docid]
            if i not in self.labeled:
                self.pool.add(i)

    def label(self, docid: str, relevant: bool) -> None:
        i = self.view.position[docid]
        self.pool.discard(i)
        self.labeled[i] = relevant

    def retrain(self) -> None:
        """Fit on seed + judgments + presumed negatives, then score the pool.

        Presumed negatives are drawn from every unlabeled document of the
        collection, so instances that hold the same judgments and seed
        sample the same negatives. On Mars this reads feature vectors of
        documents that are not in the Mars cache.
        """
        labeled = np.array(sorted(self.labeled), dtype=np.int64)
        unlabeled = np.setdiff1d(np.arange(len(self.view)), labeled, assume_unique=True)
        size = min(self.config.presumed_negatives, len(unlabeled))
        negatives = np.sort(self.rng.choice(unlabeled, size=size, replace=False))

        blocks = [self.seed_vector] + [self.view.X[rows] for rows in (labeled, negatives) if len(rows)]
        X = sparse.vstack(blocks).tocsr()
        y = np.concatenate(
            [[1], [int(self.labeled[i]) for i in labeled], np.zeros(size, dtype=int)]
        ).astype(int)
        classifier = fit_linear(X, y, self.config.quality)

        pool = np.fromiter(self.pool, dtype=np.int64, count=len(self.pool))
        if len(pool):
            self.scores[pool] = classifier.decision_function(self.view.X[pool])
        self.retrains += 1

    def take(self, n: int) -> List[str]:
        """Remove and return the top-n pool documents, ties by docid."""
        pool = np.fromiter(self.pool, dtype=np.int64, count=len(self.pool))
        order = np.lexsort((self.view.docid_rank[pool], -self.scores[pool]))
        chosen = pool[order[:n]]
        self.pool.difference_update(int(i) for i in chosen)
        return [self.view.docids[i] for i in chosen]


def cal_step(state: CalState, size: Optional[int] = None) -> List[str]:
    """Retrain and return the next batch (of `size`, default the current B)."""
    if not state.pool:
        raise PoolExhausted(f"Pool empty after {len(state.labeled)} judgments")
    state.retrain()
    batch = state.take(state.batch_size if size is None else size)
    state.batch_size = next_batch_size(state.batch_size)
    return batch


# ---------------------------------------------------------------------------
# Scenarios
# ---------------------------------------------------------------------------


@dataclass
class _Assessor:
    view: CorpusView
    relevant: Set[str]
    stop: StopRule
    t: float = 0.0
    found: int = 0
    judged: int = 0
    delivered: int = 0
    points: List[GainPoint] = field(default_factory=lambda: [GainPoint(time_s=0.0, recall=0.0, docs_shipped=0)])

    @property
    def recall(self) -> float:
        return self.found / len(self.relevant)

    def within_budget(self, t: float) -> bool:
        return self.stop.time_budget_s is None or t <= self.stop.time_budget_s

    def target_reached(self) -> bool:
        return self.stop.recall_target is not None and self.recall >= self.stop.recall_target

    def judge(self, docid: str) -> bool:
        relevant = docid in self.relevant
        self.t += self.view.reading_time(docid)
        self.found += relevant
        self.judged += 1
        self.points.append(
            GainPoint(
                time_s=self.t,
                recall=self.recall,
                docs_shipped=self.delivered,
                judged=self.judged,
            )
        )
        return relevant

    def judge_batch(self, batch: Sequence[str], state: CalState) -> Tuple[List[Tuple[str, bool]], bool]:
        """Judge in order; returns the judgments and whether the run must stop."""
        judgments = []
        for docid in batch:
            if not self.within_budget(self.t + self.view.reading_time(docid)):
                return judgments, True
            relevant = self.judge(docid)
            state.label(docid, relevant)
            judgments.append((docid, relevant))
            if self.target_reached():
                return judgments, True
        return judgments, False


def _run_earth(scenario: RecallScenario, state: CalState, assessor: _Assessor) -> bool:
    idle = scenario.link.roundtrip_s if scenario.kind is ScenarioKind.EARTH_TAR_LATENCY else 0.0
    while state.pool:
        if not assessor.within_budget(assessor.t + idle):
            return False
        assessor.t += idle
        batch = cal_step(state)
        assessor.delivered += len(batch)
        _, stopped = assessor.judge_batch(batch, state)
        if stopped:
            return False
    return True


class _EarthShipper:
    """The Earth-side CAL instance of the two-instance scenarios."""

    def __init__(self, kernel: SimKernel, state: CalState, cadence: ShippingCadence, rtt: float):
        self.kernel = kernel
        self.state = state
        self.cadence = cadence
        self.rtt = rtt
        self.lead = math.ceil(rtt / state.view.expected_reading_time)
        self.shipped: Set[str] = set()
        self.outstanding = 0
        self.generation = 0

    def handle(self, event: Event) -> None:
        kind, body = event.payload
        if kind == "judgments":
            for docid, relevant in body:
                self.state.label(docid, relevant)
                self.outstanding -= docid in self.shipped
            self._ship()
        elif kind == "query":
            self._ship()
        elif kind == "heartbeat" and body == self.generation:
            self._ship(retrain=False)

    def _ship(self, retrain: bool = True) -> None:
        if not self.state.pool:
            return
        size = self.state.batch_size
        if self.cadence is ShippingCadence.STREAM:
            size = max(size, size + self.lead - self.outstanding)
        docs = cal_step(self.state, size) if retrain else self.state.take(size)
        self.shipped.update(docs)
        self.outstanding += len(docs)
        self.kernel.transmit(("docs", docs), Endpoint.EARTH, Endpoint.MARS)
        self.kernel.log.debug(f"Earth shipped {len(docs)} documents")

        self.generation += 1
        if self.cadence is ShippingCadence.BATCH and self.rtt > 0 and self.state.pool:
            self.kernel.post(self.kernel.clock + self.rtt, Endpoint.EARTH, ("heartbeat", self.generation))


def _run_mars(
    scenario: RecallScenario,
    view: CorpusView,
    seed_text: str,
    config: RecallConfig,
    assessor: _Assessor,
) -> Tuple[bool, int]:
    cache = set()
    if scenario.kind is ScenarioKind.MARS_TAR_CACHE:
        cache = {docid for docid in scenario.cache_seed if docid in view.position}
    mars = CalState(view, seed_text, sorted(cache), config)
    earth = CalState(view, seed_text, [d for d in view.docids if d not in cache], config)

    kernel = SimKernel(scenario.link)
    shipper = _EarthShipper(kernel, earth, scenario.cadence, scenario.link.roundtrip_s)

    def receive(event: Event) -> None:
        _, docs = event.payload
        mars.add_to_pool(docs)
        assessor.delivered += len(docs)

    kernel.on(Endpoint.EARTH, shipper.handle)
    kernel.on(Endpoint.MARS, receive)
    kernel.transmit(("query", ()), Endpoint.MARS, Endpoint.EARTH)

    while True:
        kernel.run_until(assessor.t)
        if not mars.pool:
            upcoming = kernel.next_time()
            if upcoming is None:
                return True, kernel.transmitted
            if not assessor.within_budget(upcoming):
                return False, kernel.transmitted
            assessor.t = upcoming
            continue

        judgments, stopped = assessor.judge_batch(cal_step(mars), mars)
        if judgments:
            kernel.transmit(("judgments", judgments), Endpoint.MARS, Endpoint.EARTH, at=assessor.t)
        if stopped:
            return False, kernel.transmitted


def run_scenario(
    scenario: RecallScenario,
    corpus: Corpus,
    topic: Topic | str,
    qrels: Qrels,
    stop: StopRule = StopRule(),
    config: RecallConfig = RecallConfig(),
    view: Optional[CorpusView] = None,
) -> GainCurve:
    """Simulate one topic under one scenario and return its gain curve."""
    topic = corpus.topic(topic) if isinstance(topic, str) else topic
    view = view or CorpusView.build(corpus, config.quality)
    relevant = {docid for docid in qrels.get(topic.id, ()) if docid in view.position}
    if not relevant:
        raise ValueError(f"Topic '{topic.id}' has no relevant documents in the corpus")

    assessor = _Assessor(view=view, relevant=relevant, stop=stop)
    if scenario.kind in (ScenarioKind.EARTH_TAR, ScenarioKind.EARTH_TAR_LATENCY):
        state = CalState(view, topic.description, view.docids, config)
        terminated = _run_earth(scenario, state, assessor)
    else:
        terminated, messages = _run_mars(scenario, view, topic.description, config, assessor)
        logger.debug(f"Topic {topic.id}: {messages} messages crossed the link")

    logger.info(
        f"Topic {topic.id} [{scenario.kind.value}, rtt={scenario.link.rtt_minutes:g} min]: "
        f"recall {assessor.recall:.3f} after {assessor.judged} judgments, t={assessor.t:.0f}s"
    )
    if terminated and assessor.found < len(relevant):
        logger.warning(f"Topic {topic.id}: no documents left anywhere at recall {assessor.recall:.3f}")
    return GainCurve(
        topic=topic.id,
        scenario=scenario.kind.value,
        rtt_s=scenario.link.roundtrip_s,
        total_relevant=len(relevant),
        points=assessor.points,
        terminated=terminated,
    )


# ---------------------------------------------------------------------------
# Curves and batches of topics
# ---------------------------------------------------------------------------


def time_to_recall(curve: GainCurve, target: float) -> Optional[float]:
    """Virtual time at which the curve first reaches `target`, if ever."""
    for point in curve.points:
        if point.recall >= target:
            return point.time_s
    return None


def recall_at(curve: GainCurve, t: float) -> float:
    recall = 0.0
    for point in curve.points:
        if point.time_s > t:
            break
        recall = point.recall
    return recall


def mean_gain_curve(curves: Sequence[GainCurve], grid: Sequence[float]) -> List[Tuple[float, float]]:
    """Mean recall over curves at each grid time (curves are step functions)."""
    if not curves:
        return [(float(t), 0.0) for t in grid]
    return [(float(t), float(np.mean([recall_at(c, t) for c in curves]))) for t in grid]


def default_grid(curves: Sequence[GainCurve], steps: int = 100) -> List[float]:
    end = max((c.points[-1].time_s for c in curves if c.points), default=0.0)
    return list(np.linspace(0.0, end, steps + 1))


def _run_topic(args) -> GainCurve:
    scenario, corpus, topic, qrels, stop, config = args
    return run_scenario(scenario, corpus, topic, qrels, stop, config)


def run_topics(
    scenario: RecallScenario,
    corpus: Corpus,
    qrels: Qrels,
    stop: StopRule = StopRule(),
    config: RecallConfig = RecallConfig(),
    topics: Optional[Sequence[str]] = None,
    workers: int = 1,
) -> List[GainCurve]:
    """Run every topic with relevant documents, optionally in worker processes."""
    if workers < 1:
        raise ValueError(f"Invalid workers: {workers} (must be >= 1)")
    chosen = [corpus.topic(t) for t in topics] if topics else list(corpus.topics)
    docids = {doc.docid for doc in corpus.documents}
    runnable = []
    for topic in chosen:
        if docids & qrels.get(topic.id, set()):
            runnable.append(topic)
        else:
            logger.warning(f"Skipping topic {topic.id}: no relevant documents")

    logger.info(
        f"Running {len(runnable)} topics [{scenario.kind.value}] with {workers} worker(s)"
    )
    if workers == 1:
        view = CorpusView.build(corpus, config.quality)
        return [
            run_scenario(scenario, corpus, topic, qrels, stop, config, view)
            for topic in tqdm(runnable, desc="Topics")
        ]

    tasks = [(scenario, corpus, topic, qrels, stop, config) for topic in runnable]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(tqdm(pool.map(_run_topic, tasks), total=len(tasks), desc="Topics"))
