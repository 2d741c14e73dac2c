"""Replaying search sessions from Mars under latency remediation policies.

Each replay walks a session's steps (queries and clicks) in log time order
and counts the requests the user has to wait on. Baseline and SERP
pre-fetching charge a full roundtrip per blocking request. The static
cache replay is overlap-aware: a query is sent as soon as it is issued and
the user only waits for whatever part of the roundtrip is still left when
they click a page that has not arrived.

`replay_event_driven` replays the same policies on the simulation kernel
and serves as the oracle for the closed forms.
"""

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Set

from tqdm import tqdm

from marssearch.core.config import LinkConfig, PolicyConfig, PolicyKind
from marssearch.core.kernel import Endpoint, Event, SimKernel
from marssearch.core.models import HitReport, Session, SessionLog, SessionOutcome, SimulationResult
from marssearch.core.retrieval import InvertedIndex, ranked_docids
from marssearch.core.sessionlog import earth_pages, session_duration, unique_fetches
from marssearch.utils.io import read_lines
from marssearch.utils.logger import logger


class SuggestionProvider:
    """Query -> ordered suggestions, loaded from a fixture file.

    Keys are compared after stripping surrounding whitespace; unknown
    queries have no suggestions.
    """

    def __init__(self, suggestions: Optional[Mapping[str, Iterable[str]]] = None):
        self._suggestions: Dict[str, List[str]] = {}
        for query, items in (suggestions or {}).items():
            self._suggestions.setdefault(query.strip(), []).extend(
                s.strip() for s in items if s.strip()
            )

    def __len__(self) -> int:
        return len(self._suggestions)

    def suggest(self, query: str) -> List[str]:
        return list(self._suggestions.get(query.strip(), ()))

    @classmethod
    def from_file(cls, file_path: str | Path) -> "SuggestionProvider":
        """Load a JSON object `{query: [suggestion, ...]}` or TSV `query<TAB>suggestion` lines."""
        path = Path(file_path)
        text = path.read_text(encoding="utf-8")
        if text.lstrip().startswith("{"):
            data = json.loads(text)
            if not all(isinstance(v, list) for v in data.values()):
                raise ValueError(f"{path}: every suggestion entry must be a list of strings")
            provider = cls(data)
        else:
            pairs: Dict[str, List[str]] = {}
            for number, line in enumerate(read_lines(path), 1):
                query, sep, suggestion = line.partition("\t")
                if not sep:
                    raise ValueError(f"{path}:{number}: expected 'query<TAB>suggestion'")
                pairs.setdefault(query, []).append(suggestion)
            provider = cls(pairs)
        logger.info(f"Loaded suggestions for {len(provider)} queries from {path}")
        return provider


class StepKind(str, Enum):
    QUERY = "query"
    CLICK = "click"


@dataclass(frozen=True)
class Step:
    time_s: float
    kind: StepKind
    query: str = ""
    docid: str = ""
    results: tuple = ()


def session_steps(session: Session) -> List[Step]:
    """Queries and clicks ordered by log time; a query precedes its own clicks."""
    keyed = []
    for position, interaction in enumerate(session.interactions):
        keyed.append(
            (
                (interaction.starttime_s, position, 0, 0),
                Step(
                    interaction.starttime_s,
                    StepKind.QUERY,
                    query=interaction.query,
                    results=tuple(dict.fromkeys(interaction.result_docids)),
                ),
            )
        )
        for c, click in enumerate(interaction.clicks):
            keyed.append(
                (
                    (click.starttime_s, position, 1, c),
                    Step(click.starttime_s, StepKind.CLICK, docid=click.docid),
                )
            )
    keyed.sort(key=lambda pair: pair[0])
    return [step for _, step in keyed]


def _outcome(
    session: Session,
    policy: str,
    link: LinkConfig,
    waits: int,
    wait_time: float,
    pages: int,
    hits: Optional[HitReport] = None,
) -> SessionOutcome:
    earth_time = session_duration(session)
    return SessionOutcome(
        session_id=session.id,
        policy=policy,
        rtt_s=link.roundtrip_s,
        earth_time_s=earth_time,
        mars_time_s=earth_time + wait_time,
        pages_transferred=pages,
        blocking_waits=waits,
        wait_time_s=wait_time,
        earth_pages=earth_pages(session),
        hits=hits,
    )


# ---------------------------------------------------------------------------
# Closed-form replays
# ---------------------------------------------------------------------------


def replay_baseline(session: Session, link: LinkConfig) -> SessionOutcome:
    """Every unique query and clicked page is one blocking roundtrip."""
    fetches = unique_fetches(session)
    waits = fetches.unique_queries + fetches.unique_clicked_pages
    return _outcome(session, PolicyKind.BASELINE.value, link, waits, waits * link.roundtrip_s, waits)


def _replay_prefetching(
    session: Session,
    link: LinkConfig,
    policy: str,
    extra_pages=None,
) -> SessionOutcome:
    # extra_pages(query) -> docids Earth ships with the SERP beyond its links
    transferred: Set[str] = set()
    sent: Set[str] = set()
    waits = pages = 0
    for step in session_steps(session):
        if step.kind is StepKind.QUERY:
            if step.query in sent:
                continue
            sent.add(step.query)
            waits += 1
            pages += 1
            shipped = list(step.results)
            if extra_pages is not None:
                shipped.extend(extra_pages(step.query))
            for docid in shipped:
                if docid not in transferred:
                    transferred.add(docid)
                    pages += 1
        elif step.docid not in transferred:
            transferred.add(step.docid)
            waits += 1
            pages += 1
    return _outcome(session, policy, link, waits, waits * link.roundtrip_s, pages)


def replay_serp_prefetch(session: Session, link: LinkConfig) -> SessionOutcome:
    """Each SERP response carries every linked page not yet on Mars."""
    return _replay_prefetching(session, link, PolicyKind.SERP_PREFETCH.value)


def replay_topical_prefetch(
    session: Session, index: InvertedIndex, k: int, link: LinkConfig
) -> SessionOutcome:
    """SERP pre-fetching plus the top-k BM25 documents of each unique query.

    Blocking waits match SERP pre-fetching unless the user clicks a page
    that only the topical top-k delivered.
    """
    ranking: Dict[str, List[str]] = {}

    def top_k(query: str) -> List[str]:
        if query not in ranking:
            ranking[query] = ranked_docids(index, query, k)
        return ranking[query]

    outcome = _replay_prefetching(session, link, PolicyKind.TOPICAL_PREFETCH.value, top_k)
    outcome.hits = _session_topical_hits(session, top_k, index)
    return outcome


def replay_suggestion_prefetch(
    session: Session,
    provider: SuggestionProvider,
    link: LinkConfig,
    depth: int = 8,
    serp_depth: int = 10,
) -> SessionOutcome:
    """SERP pre-fetching where Earth also runs the first `depth` suggestions.

    A later query equal to an already shipped suggestion is answered on
    Mars. Suggestion SERPs the session never shows are charged one SERP
    page plus `serp_depth` linked pages.
    """
    known: Dict[str, tuple] = {}
    for interaction in session.interactions:
        known.setdefault(interaction.query.strip(), tuple(dict.fromkeys(interaction.result_docids)))

    transferred: Set[str] = set()
    on_mars: Set[str] = set()
    waits = pages = matched = 0

    def ship(results: Iterable[str]) -> int:
        fresh = [docid for docid in results if docid not in transferred]
        transferred.update(fresh)
        return len(fresh)

    for step in session_steps(session):
        if step.kind is StepKind.CLICK:
            if step.docid not in transferred:
                transferred.add(step.docid)
                waits += 1
                pages += 1
            continue

        query = step.query.strip()
        if query in on_mars:
            continue
        on_mars.add(query)
        waits += 1
        pages += 1 + ship(step.results)
        for suggestion in provider.suggest(query)[:depth]:
            if suggestion in on_mars:
                continue
            on_mars.add(suggestion)
            if suggestion in known:
                matched += 1
                pages += 1 + ship(known[suggestion])
            else:
                pages += 1 + serp_depth

    logger.debug(f"Session {session.id}: {matched} shipped suggestions appear in the session")
    return _outcome(
        session,
        PolicyKind.SUGGESTION_PREFETCH.value,
        link,
        waits,
        waits * link.roundtrip_s,
        pages,
    )


def replay_static_cache(session: Session, cache: Set[str], link: LinkConfig) -> SessionOutcome:
    """Local search over a cache on Mars, with SERP pre-fetching from Earth.

    Queries are sent without waiting. Earth answers after one roundtrip
    with its SERP and every linked page that is neither cached nor already
    on its way. Only a click on a page that has not yet arrived blocks, for
    the rest of that page's roundtrip. A clicked page no SERP linked is
    fetched on demand for a full roundtrip.
    """
    rtt = link.roundtrip_s
    arrival: Dict[str, float] = {}
    sent: Set[str] = set()
    offset = wait_time = 0.0
    waits = pages = 0

    for step in session_steps(session):
        now = step.time_s + offset
        if step.kind is StepKind.QUERY:
            if step.query in sent:
                continue
            sent.add(step.query)
            pages += 1
            for docid in step.results:
                if docid not in cache and docid not in arrival:
                    arrival[docid] = now + rtt
                    pages += 1
            continue

        if step.docid in cache:
            continue
        if step.docid in arrival:
            wait = arrival[step.docid] - now
            if wait <= 0:
                continue
        else:
            arrival[step.docid] = now + rtt
            pages += 1
            wait = rtt
        waits += 1
        offset += wait
        wait_time += wait

    return _outcome(session, PolicyKind.STATIC_CACHE.value, link, waits, wait_time, pages)


# ---------------------------------------------------------------------------
# Event-driven oracle
# ---------------------------------------------------------------------------

ORACLE_POLICIES = (PolicyKind.BASELINE, PolicyKind.SERP_PREFETCH, PolicyKind.STATIC_CACHE)


@dataclass
class _EarthServer:
    kernel: SimKernel
    kind: PolicyKind
    cache: Set[str]
    shipped: Set[str] = field(default_factory=set)
    pages: int = 0

    def handle(self, event: Event) -> None:
        kind, key, results = event.payload
        if kind == "query":
            docs = []
            if self.kind is not PolicyKind.BASELINE:
                docs = [d for d in results if d not in self.cache and d not in self.shipped]
            self.shipped.update(docs)
            self.pages += 1 + len(docs)
            self.kernel.transmit(("serp", key, tuple(docs)), Endpoint.EARTH, Endpoint.MARS)
        else:
            self.shipped.add(key)
            self.pages += 1
            self.kernel.transmit(("page", key, ()), Endpoint.EARTH, Endpoint.MARS)


@dataclass
class _MarsUser:
    kernel: SimKernel
    kind: PolicyKind
    steps: List[Step]
    available: Set[str]
    serps: Set[str] = field(default_factory=set)
    sent: Set[str] = field(default_factory=set)
    expected: Set[str] = field(default_factory=set)
    blocked: Optional[tuple] = None
    offset: float = 0.0
    wait_time: float = 0.0
    waits: int = 0

    def start(self) -> None:
        if self.steps:
            self.kernel.post(self.steps[0].time_s, Endpoint.MARS, ("step", 0, ()))

    def handle(self, event: Event) -> None:
        kind, key, docs = event.payload
        if kind == "step":
            self._step(key)
            return
        if kind == "serp":
            self.serps.add(key)
        else:
            self.available.add(key)
        self.available.update(docs)
        self._maybe_resume()

    def _request(self, kind: str, key: str, results: tuple = ()) -> None:
        self.kernel.transmit((kind, key, results), Endpoint.MARS, Endpoint.EARTH)

    def _block(self, j: int, need: tuple, counted: bool) -> None:
        self.blocked = (j, need, counted, self.kernel.clock)

    def _step(self, j: int) -> None:
        step = self.steps[j]
        if step.kind is StepKind.QUERY:
            if step.query not in self.sent:
                self.sent.add(step.query)
                self._request("query", step.query, step.results)
                if self.kind is PolicyKind.STATIC_CACHE:
                    self.expected.update(step.results)
                else:
                    self._block(j, ("serp", step.query), counted=True)
                    return
        elif step.docid not in self.available:
            if step.docid in self.expected:
                self._block(j, ("doc", step.docid), counted=False)
            else:
                self.expected.add(step.docid)
                self._request("fetch", step.docid)
                self._block(j, ("doc", step.docid), counted=True)
            return
        self._advance(j)

    def _maybe_resume(self) -> None:
        if self.blocked is None:
            return
        j, (need, key), counted, since = self.blocked
        if key not in (self.serps if need == "serp" else self.available):
            return
        self.blocked = None
        wait = self.kernel.clock - since
        # waiting on a page already in flight only counts if time passes
        if counted or wait > 0:
            self.waits += 1
        self.offset += wait
        self.wait_time += wait
        self.kernel.log.debug(f"Mars resumes step {j} after {wait:g}s on {need} {key}")
        self._advance(j)

    def _advance(self, j: int) -> None:
        if j + 1 < len(self.steps):
            nxt = self.steps[j + 1]
            # clamp absorbs float drift when two steps share a timestamp
            at = max(nxt.time_s + self.offset, self.kernel.clock)
            self.kernel.post(at, Endpoint.MARS, ("step", j + 1, ()))


def replay_event_driven(
    session: Session,
    policy: PolicyConfig | PolicyKind | str,
    link: LinkConfig,
    cache: Optional[Set[str]] = None,
) -> SessionOutcome:
    """Replay on the simulation kernel with an Earth server and a Mars user.

    Supports baseline, SERP pre-fetching and static caching.
    """
    kind = policy.kind if isinstance(policy, PolicyConfig) else PolicyKind(policy)
    if kind not in ORACLE_POLICIES:
        raise ValueError(
            f"Event-driven replay supports {[p.value for p in ORACLE_POLICIES]}, got '{kind.value}'"
        )
    cache = set(cache or ()) if kind is PolicyKind.STATIC_CACHE else set()

    kernel = SimKernel(link)
    earth = _EarthServer(kernel, kind, cache)
    mars = _MarsUser(kernel, kind, session_steps(session), available=set(cache))
    kernel.on(Endpoint.EARTH, earth.handle)
    kernel.on(Endpoint.MARS, mars.handle)
    mars.start()
    kernel.run()

    if mars.blocked is not None:
        raise RuntimeError(f"Session {session.id}: replay ended with the user still waiting")
    return _outcome(session, kind.value, link, mars.waits, mars.wait_time, earth.pages)


# ---------------------------------------------------------------------------
# Hit counting
# ---------------------------------------------------------------------------


def _session_topical_hits(session: Session, top_k, index: InvertedIndex) -> HitReport:
    prefetched: Set[str] = set()
    judged: Set[str] = set()
    report = HitReport()
    for position, interaction in enumerate(session.interactions):
        if position > 0:
            for docid in dict.fromkeys(interaction.result_docids):
                if docid in judged:
                    continue
                judged.add(docid)
                report.candidates += 1
                if docid not in index:
                    report.missing += 1
                elif docid in prefetched:
                    report.hits += 1
        prefetched.update(top_k(interaction.query))
    return report


def topical_prefetch_hits(log: SessionLog, index: InvertedIndex, k: int) -> HitReport:
    """How often a SERP document was already among the BM25 top-k of an
    earlier query in the same session.

    Candidates are the distinct docids shown after each session's first
    query, judged at their first such appearance.
    """
    if k < 1:
        raise ValueError(f"Invalid k: {k} (must be >= 1)")
    ranking: Dict[str, List[str]] = {}

    def top_k(query: str) -> List[str]:
        if query not in ranking:
            ranking[query] = ranked_docids(index, query, k)
        return ranking[query]

    total = HitReport()
    for session in log.sessions:
        total = total + _session_topical_hits(session, top_k, index)
    if total.missing:
        logger.warning(f"{total.missing} SERP docids are not in the index; counted as misses")
    logger.info(f"Topical prefetch k={k}: {total.hits}/{total.candidates} hits")
    return total


def suggestion_matches(log: SessionLog, provider: SuggestionProvider) -> int:
    """Later queries equal (after stripping) to a suggestion for an earlier
    query of the same session. A repeated query string counts once per session."""
    count = 0
    for session in log.sessions:
        suggested: Set[str] = set()
        matched: Set[str] = set()
        for interaction in session.interactions:
            query = interaction.query.strip()
            if query in suggested and query not in matched:
                matched.add(query)
                count += 1
            suggested.update(provider.suggest(query))
    return count


# ---------------------------------------------------------------------------
# Dispatch
# ---------------------------------------------------------------------------


def _provider(policy: PolicyConfig, provider: Optional[SuggestionProvider]) -> SuggestionProvider:
    source = provider if provider is not None else policy.suggestion_source
    if isinstance(source, SuggestionProvider):
        return source
    if isinstance(source, (str, Path)):
        return SuggestionProvider.from_file(source)
    if isinstance(source, Mapping):
        return SuggestionProvider(source)
    raise ValueError(f"Unusable suggestion source: {source!r}")


def replay(
    session: Session,
    policy: PolicyConfig,
    link: LinkConfig,
    *,
    cache: Optional[Set[str]] = None,
    index: Optional[InvertedIndex] = None,
    provider: Optional[SuggestionProvider] = None,
) -> SessionOutcome:
    """Replay one session under `policy`."""
    kind = policy.kind
    if kind is PolicyKind.BASELINE:
        return replay_baseline(session, link)
    if kind is PolicyKind.SERP_PREFETCH:
        return replay_serp_prefetch(session, link)
    if kind is PolicyKind.TOPICAL_PREFETCH:
        if index is None:
            raise ValueError("The topical policy needs a BM25 index")
        return replay_topical_prefetch(session, index, policy.k, link)
    if kind is PolicyKind.SUGGESTION_PREFETCH:
        return replay_suggestion_prefetch(
            session, _provider(policy, provider), link, policy.suggestion_depth, policy.serp_depth
        )
    if cache is None:
        raise ValueError("The cache policy needs a cache set")
    return replay_static_cache(session, cache, link)


def replay_log(
    log: SessionLog,
    policy: PolicyConfig,
    link: LinkConfig,
    *,
    cache: Optional[Set[str]] = None,
    index: Optional[InvertedIndex] = None,
    provider: Optional[SuggestionProvider] = None,
) -> SimulationResult:
    if policy.kind is PolicyKind.SUGGESTION_PREFETCH:
        provider = _provider(policy, provider)

    logger.info(
        f"Replaying {len(log.sessions)} sessions: policy={policy.kind.value}, "
        f"rtt={link.rtt_minutes:g} min"
    )
    outcomes = [
        replay(session, policy, link, cache=cache, index=index, provider=provider)
        for session in tqdm(log.sessions, desc="Replaying sessions", disable=len(log.sessions) < 1000)
    ]
    return SimulationResult(
        policy=policy.kind.value,
        lag_min=link.rtt_minutes,
        source=log.source,
        outcomes=outcomes,
    )
