"""Session logs: Session Track XML ingest, canonical JSON, statistics, synthesis."""

import json
import xml.etree.ElementTree as ET
from pathlib import Path
from typing import Dict, FrozenSet, List, NamedTuple, Optional

import numpy as np
from pydantic import ValidationError
from tqdm import tqdm

from marssearch.core.config import ClickModel, LogSynthConfig
from marssearch.core.models import (
    Click,
    Corpus,
    Interaction,
    InteractionKind,
    ResultEntry,
    Session,
    SessionLog,
)
from marssearch.core.retrieval import bm25_search
from marssearch.utils.io import atomic_write_bytes
from marssearch.utils.logger import logger

CANONICAL_FORMAT = "marssearch.sessionlog"
CANONICAL_VERSION = 1

DOCID_TAGS = ("clueweb12id", "clueweb09id", "docno", "docid")


class LogParseError(ValueError):
    """The log is not well-formed XML."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(message)
        self.line = line
        self.column = column


class LogSchemaError(ValueError):
    """A mandatory element or attribute is missing or invalid."""


class CanonicalVersionError(ValueError):
    """A canonical log was written by an incompatible format version."""


class EmptyQueryPoolError(ValueError):
    """Log synthesis was asked to draw queries from an empty pool."""


class FetchSummary(NamedTuple):
    unique_queries: int
    unique_clicked_pages: int
    serp_linked_pages: FrozenSet[str]


# ---------------------------------------------------------------------------
# XML ingest
# ---------------------------------------------------------------------------


def _attr(elem: ET.Element, name: str) -> str:
    value = elem.get(name)
    if value is None or not value.strip():
        raise LogSchemaError(f"<{elem.tag}> is missing mandatory attribute '{name}'")
    return value.strip()


def _number(elem: ET.Element, name: str, cast=float):
    raw = _attr(elem, name)
    try:
        return cast(raw)
    except ValueError:
        raise LogSchemaError(f"<{elem.tag}> attribute '{name}' is not a number: '{raw}'")


def _text(elem: ET.Element, tag: str) -> Optional[str]:
    child = elem.find(tag)
    if child is None or child.text is None:
        return None
    return child.text.strip()


def _docid(elem: ET.Element) -> Optional[str]:
    for tag in DOCID_TAGS:
        value = _text(elem, tag) or (elem.get(tag) or "").strip()
        if value:
            return value
    return None


def _parse_results(elem: ET.Element) -> List[ResultEntry]:
    container = elem.find("results")
    if container is None:
        return []
    results = []
    for result in container.iter("result"):
        rank = _number(result, "rank", int)
        docid = _docid(result)
        if docid is None:
            raise LogSchemaError(f"<result rank=\"{rank}\"> has no document id")
        results.append(
            ResultEntry(
                rank=rank,
                url=_text(result, "url") or "",
                docid=docid,
                title=_text(result, "title"),
                snippet=_text(result, "snippet"),
            )
        )
    return sorted(results, key=lambda r: r.rank)


def _parse_clicks(
    elem: ET.Element, starttime_s: float, results: List[ResultEntry]
) -> List[Click]:
    container = elem.find("clicked")
    if container is None:
        return []
    by_rank = {r.rank: r.docid for r in results}
    clicks = []
    for click in container.iter("click"):
        docid = _docid(click)
        if docid is None:
            rank_text = _text(click, "rank") or click.get("rank")
            rank = int(rank_text) if rank_text and rank_text.strip().isdigit() else None
            docid = by_rank.get(rank) if rank is not None else None
        if docid is None:
            logger.warning(f"Skipping click with no docid or resolvable rank at t={starttime_s}")
            continue

        start = _number(click, "starttime") if click.get("starttime") is not None else starttime_s
        if start < starttime_s:
            logger.warning(f"Click on {docid} precedes its query; clamped to {starttime_s}")
            start = starttime_s
        end_raw = click.get("endtime")
        end = max(_number(click, "endtime"), start) if end_raw else None
        clicks.append(Click(docid=docid, starttime_s=start, endtime_s=end))
    return sorted(clicks, key=lambda c: c.starttime_s)


def _kind(elem: ET.Element, position: int) -> InteractionKind:
    declared = (elem.get("type") or "").strip().lower()
    if declared in {k.value for k in InteractionKind}:
        return InteractionKind(declared)
    return InteractionKind.INITIAL if position == 0 else InteractionKind.REFORMULATE


def _parse_interaction(elem: ET.Element, position: int) -> Interaction:
    num = _number(elem, "num", int)
    starttime_s = _number(elem, "starttime")
    results = _parse_results(elem)
    try:
        return Interaction(
            num=num,
            starttime_s=starttime_s,
            kind=_kind(elem, position),
            query=_text(elem, "query") or "",
            results=results,
            clicks=_parse_clicks(elem, starttime_s, results),
        )
    except ValidationError as exc:
        raise LogSchemaError(f"<interaction num=\"{num}\"> is invalid: {exc}") from exc


def _parse_session(elem: ET.Element, index: int, include_current_query: bool) -> Optional[Session]:
    session_id = (elem.get("num") or elem.get("id") or f"session-{index}").strip()
    interactions = [
        _parse_interaction(child, position)
        for position, child in enumerate(elem.findall("interaction"))
    ]

    current = elem.find("currentquery")
    if include_current_query and current is not None:
        interactions.append(
            Interaction(
                num=max((i.num for i in interactions), default=0) + 1,
                starttime_s=_number(current, "starttime"),
                kind=InteractionKind.REFORMULATE if interactions else InteractionKind.INITIAL,
                query=_text(current, "query") or "",
            )
        )

    if not interactions:
        logger.warning(f"Session {session_id} has no interactions; skipped")
        return None
    interactions.sort(key=lambda i: i.starttime_s)
    return Session(id=session_id, interactions=interactions)


def parse_xml_log(
    data: bytes, source: str = "", include_current_query: bool = True
) -> SessionLog:
    """Parse a Session Track style XML export. Unknown elements are ignored."""
    try:
        root = ET.fromstring(data)
    except ET.ParseError as exc:
        line, column = exc.position
        raise LogParseError(
            f"Malformed XML at line {line}, column {column}: {exc}", line, column
        ) from exc

    elements = [root] if root.tag == "session" else list(root.iter("session"))
    sessions = []
    for index, elem in enumerate(elements, 1):
        session = _parse_session(elem, index, include_current_query)
        if session is not None:
            sessions.append(session)

    logger.info(f"Parsed {len(sessions)} sessions from XML")
    return SessionLog(sessions=sessions, source=source)


# ---------------------------------------------------------------------------
# Canonical JSON
# ---------------------------------------------------------------------------


def write_canonical(log: SessionLog) -> bytes:
    """Serialize a log to the canonical, key-sorted JSON form."""
    document = {
        "format": CANONICAL_FORMAT,
        "version": CANONICAL_VERSION,
        "source": log.source,
        "sessions": [session.model_dump(mode="json") for session in log.sessions],
    }
    return (json.dumps(document, sort_keys=True, indent=2, ensure_ascii=False) + "\n").encode(
        "utf-8"
    )


def read_canonical(data: bytes) -> SessionLog:
    document = json.loads(data.decode("utf-8"))
    if not isinstance(document, dict):
        raise LogSchemaError("Canonical log must be a JSON object")
    version = document.get("version")
    if document.get("format", CANONICAL_FORMAT) != CANONICAL_FORMAT or version != CANONICAL_VERSION:
        raise CanonicalVersionError(
            f"Unsupported canonical log version: {version!r} "
            f"(this build reads version {CANONICAL_VERSION})"
        )
    return SessionLog.model_validate(
        {"sessions": document.get("sessions", []), "source": document.get("source", "")}
    )


def load_session_log(file_path: str | Path) -> SessionLog:
    """Load a log file, XML or canonical JSON, sniffed from its first byte."""
    path = Path(file_path)
    data = path.read_bytes()
    if data.lstrip()[:1] == b"<":
        log = parse_xml_log(data, source=str(path))
    else:
        log = read_canonical(data)
    logger.info(f"Loaded {len(log.sessions)} sessions from {path}")
    return log


def save_session_log(log: SessionLog, file_path: str | Path) -> Path:
    path = atomic_write_bytes(file_path, write_canonical(log))
    logger.info(f"Saved {len(log.sessions)} sessions to {path}")
    return path


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------


def session_duration(session: Session) -> float:
    """Seconds from session start to the last logged timestamp."""
    latest = 0.0
    for interaction in session.interactions:
        latest = max(latest, interaction.starttime_s)
        for click in interaction.clicks:
            latest = max(latest, click.last_time_s)
    return latest


def unique_fetches(session: Session) -> FetchSummary:
    """Queries deduplicated by exact text, clicks by docid.

    SERP-linked pages are taken from the first occurrence of each query.
    """
    queries: Dict[str, Interaction] = {}
    clicked = set()
    for interaction in session.interactions:
        queries.setdefault(interaction.query, interaction)
        clicked.update(click.docid for click in interaction.clicks)

    linked = frozenset(
        docid for interaction in queries.values() for docid in interaction.result_docids
    )
    return FetchSummary(len(queries), len(clicked), linked)


def earth_pages(session: Session) -> int:
    """Pages delivered on Earth: every SERP and every click, no browser cache."""
    return sum(1 + len(i.clicks) for i in session.interactions)


# ---------------------------------------------------------------------------
# Synthesis
# ---------------------------------------------------------------------------


def query_pool_from_corpus(corpus: Corpus) -> List[str]:
    """Topic statements plus their two-word windows."""
    pool = []
    for topic in corpus.topics:
        words = topic.description.split()
        if words:
            pool.append(" ".join(words))
        pool.extend(" ".join(words[i : i + 2]) for i in range(len(words) - 1))
    return list(dict.fromkeys(pool))


class _SerpEngine:
    """Deterministic SERPs: the same query always gets the same results."""

    def __init__(self, corpus: Corpus, depth: int, rng: np.random.Generator, index=None):
        self.docids = [doc.docid for doc in corpus.documents]
        self.depth = min(depth, len(self.docids))
        self.rng = rng
        self.index = index
        self._cache: Dict[str, List[str]] = {}

    def _pad(self, chosen: List[str]) -> List[str]:
        seen = set(chosen)
        n = len(self.docids)
        if n <= 2 * self.depth:
            pool = [self.docids[i] for i in self.rng.permutation(n)]
            return chosen + [d for d in pool if d not in seen][: self.depth - len(chosen)]
        while len(chosen) < self.depth:
            for i in self.rng.integers(n, size=self.depth):
                docid = self.docids[i]
                if docid not in seen and len(chosen) < self.depth:
                    seen.add(docid)
                    chosen.append(docid)
        return chosen

    def serp(self, query: str) -> List[str]:
        if query not in self._cache:
            chosen: List[str] = []
            if self.index is not None:
                chosen = [docid for docid, _ in bm25_search(self.index, query, self.depth)]
            self._cache[query] = self._pad(chosen)
        return self._cache[query]


def _pick_click(
    results: List[str],
    quality: Dict[str, float],
    config: LogSynthConfig,
    rng: np.random.Generator,
) -> int:
    if config.click_model is ClickModel.QUALITY:
        scores = np.array([quality.get(docid, 0.0) for docid in results])
        # standardised within the SERP so the temperature is scale-free
        spread = scores.std() or 1.0
        weights = np.exp((scores - scores.max()) / spread / config.click_temperature)
    else:
        weights = 1.0 / np.arange(1, len(results) + 1)
    return int(rng.choice(len(results), p=weights / weights.sum()))


def synthesize_log(config: LogSynthConfig, corpus: Corpus, index=None) -> SessionLog:
    """Generate a deterministic synthetic log over `corpus`.

    Per session: 1 + Poisson(mean_queries - 1) queries and Poisson(mean_clicks)
    clicks spread uniformly over its interactions. Gaps and dwell times are
    exponential. Passing a BM25 `index` makes SERPs topical.
    """
    if not corpus.documents:
        raise ValueError("Cannot synthesize a log over an empty corpus")
    if not config.query_pool:
        raise EmptyQueryPoolError("query_pool is empty; give at least one query")

    rng = np.random.default_rng(config.seed)
    engine = _SerpEngine(corpus, config.serp_depth, rng, index)
    quality = {doc.docid: doc.quality or 0.0 for doc in corpus.documents}
    pool = config.query_pool

    sessions = []
    progress = tqdm(
        range(config.n_sessions), desc="Synthesizing sessions", disable=config.n_sessions < 1000
    )
    for s in progress:
        n_queries = 1 + int(rng.poisson(config.mean_queries - 1))
        n_clicks = int(rng.poisson(config.mean_clicks))
        clicks_per = rng.multinomial(n_clicks, [1.0 / n_queries] * n_queries)

        t = float(rng.exponential(config.mean_think_s))
        issued: List[str] = []
        interactions = []
        for j in range(n_queries):
            if issued and rng.random() < config.repeat_query_prob:
                query = issued[int(rng.integers(len(issued)))]
            else:
                query = pool[int(rng.integers(len(pool)))]
            issued.append(query)

            results = engine.serp(query)
            clicks = []
            cursor = t
            for _ in range(int(clicks_per[j])):
                docid = results[_pick_click(results, quality, config, rng)]
                start = cursor + float(rng.exponential(config.mean_click_delay_s))
                end = start + float(rng.exponential(config.mean_dwell_s))
                clicks.append(Click(docid=docid, starttime_s=start, endtime_s=end))
                cursor = end

            interactions.append(
                Interaction(
                    num=j + 1,
                    starttime_s=t,
                    kind=InteractionKind.INITIAL if j == 0 else InteractionKind.REFORMULATE,
                    query=query,
                    results=[
                        ResultEntry(rank=r, url=f"http://synthetic.example/{d}", docid=d)
                        for r, d in enumerate(results, 1)
                    ],
                    clicks=clicks,
                )
            )
            t = cursor + float(rng.exponential(config.mean_gap_s))

        sessions.append(Session(id=f"s{s + 1:05d}", interactions=interactions))

    return SessionLog(
        sessions=sessions, source=f"synthetic seed={config.seed} click_model={config.click_model.value}"
    )
