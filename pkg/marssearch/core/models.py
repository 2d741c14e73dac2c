"""Data models for marssearch."""

import math
from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class InteractionKind(str, Enum):
    INITIAL = "initial"
    REFORMULATE = "reformulate"


class ResultEntry(BaseModel):
    """One ranked result on a logged SERP."""

    rank: int = Field(ge=1, description="1-based position on the SERP")
    url: str = Field(default="", description="Result URL as logged")
    docid: str = Field(min_length=1, description="Collection document id")
    title: Optional[str] = Field(default=None, description="Result title")
    snippet: Optional[str] = Field(default=None, description="Result snippet")


class Click(BaseModel):
    """A logged click on a result page."""

    docid: str = Field(min_length=1, description="Clicked document id")
    starttime_s: float = Field(ge=0, description="Seconds from session start")
    endtime_s: Optional[float] = Field(
        default=None, description="End of the dwell, seconds from session start"
    )

    @model_validator(mode="after")
    def _check_dwell(self) -> "Click":
        if self.endtime_s is not None and self.endtime_s < self.starttime_s:
            raise ValueError(
                f"Click on {self.docid}: endtime {self.endtime_s} precedes "
                f"starttime {self.starttime_s}"
            )
        return self

    @property
    def last_time_s(self) -> float:
        return self.endtime_s if self.endtime_s is not None else self.starttime_s


class Interaction(BaseModel):
    """A query, the SERP it produced, and the clicks on that SERP."""

    num: int = Field(ge=1, description="Interaction number within the session")
    starttime_s: float = Field(ge=0, description="Seconds from session start")
    kind: InteractionKind = Field(description="Initial query or reformulation")
    query: str = Field(description="Query text as issued")
    results: List[ResultEntry] = Field(default_factory=list)
    clicks: List[Click] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_invariants(self) -> "Interaction":
        ranks = [r.rank for r in self.results]
        if ranks != list(range(1, len(ranks) + 1)):
            raise ValueError(
                f"Interaction {self.num}: result ranks must be 1..n without gaps, got {ranks}"
            )
        for click in self.clicks:
            if click.starttime_s < self.starttime_s:
                raise ValueError(
                    f"Interaction {self.num}: click at {click.starttime_s} precedes "
                    f"the query at {self.starttime_s}"
                )
        return self

    @property
    def result_docids(self) -> List[str]:
        return [r.docid for r in self.results]


class Session(BaseModel):
    """One search session: interactions in time order."""

    id: str = Field(min_length=1, description="Session identifier")
    interactions: List[Interaction] = Field(min_length=1)

    @model_validator(mode="after")
    def _check_order(self) -> "Session":
        times = [i.starttime_s for i in self.interactions]
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError(f"Session {self.id}: interactions are not sorted by starttime")
        return self


class SessionLog(BaseModel):
    """A collection of search sessions."""

    sessions: List[Session] = Field(default_factory=list)
    source: str = Field(default="", description="Free-text provenance")

    @model_validator(mode="after")
    def _check_unique_ids(self) -> "SessionLog":
        seen = set()
        for session in self.sessions:
            if session.id in seen:
                raise ValueError(f"Duplicate session id: '{session.id}'")
            seen.add(session.id)
        return self


class Topic(BaseModel):
    id: str = Field(min_length=1)
    description: str = Field(default="", description="Topic statement, used as CAL seed")


class Document(BaseModel):
    """A corpus document with optional labels and static quality."""

    docid: str = Field(min_length=1)
    text: str = ""
    word_count: Optional[int] = Field(
        default=None, ge=0, description="Whitespace-token count of text"
    )
    relevant: List[str] = Field(default_factory=list, description="Topics judged relevant")
    nonrelevant: List[str] = Field(
        default_factory=list, description="Topics judged non-relevant"
    )
    spam: bool = False
    quality: Optional[float] = Field(default=None, description="Static quality score")

    @model_validator(mode="after")
    def _fill_word_count(self) -> "Document":
        count = len(self.text.split())
        if self.word_count is None:
            self.word_count = count
        elif self.word_count != count:
            raise ValueError(
                f"Document {self.docid}: word_count {self.word_count} != {count} tokens"
            )
        return self


class Corpus(BaseModel):
    documents: List[Document] = Field(default_factory=list)
    topics: List[Topic] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_unique_docids(self) -> "Corpus":
        seen = set()
        for doc in self.documents:
            if doc.docid in seen:
                raise ValueError(f"Duplicate docid: '{doc.docid}'")
            seen.add(doc.docid)
        return self

    def by_id(self) -> Dict[str, Document]:
        return {doc.docid: doc for doc in self.documents}

    def topic(self, topic_id: str) -> Topic:
        for topic in self.topics:
            if topic.id == topic_id:
                return topic
        raise ValueError(f"Unknown topic: '{topic_id}'")


class HitReport(BaseModel):
    """Hits over candidates; ratio is absent when there are no candidates."""

    hits: int = Field(default=0, ge=0)
    candidates: int = Field(default=0, ge=0)
    missing: int = Field(default=0, ge=0, description="Log docids absent from the index")

    @property
    def ratio(self) -> Optional[float]:
        return self.hits / self.candidates if self.candidates else None

    def __add__(self, other: "HitReport") -> "HitReport":
        return HitReport(
            hits=self.hits + other.hits,
            candidates=self.candidates + other.candidates,
            missing=self.missing + other.missing,
        )


class SessionOutcome(BaseModel):
    """Per-session result of replaying a log under a policy."""

    session_id: str
    policy: str = Field(default="baseline")
    rtt_s: float = Field(default=0.0, ge=0)
    earth_time_s: float = Field(ge=0, description="Session duration as logged on Earth")
    mars_time_s: float = Field(ge=0, description="Duration including waits on Mars")
    pages_transferred: int = Field(ge=0, description="Pages sent to Mars")
    blocking_waits: int = Field(ge=0, description="Steps that waited on Earth")
    wait_time_s: float = Field(ge=0, description="Total time spent waiting")
    earth_pages: int = Field(default=0, ge=0, description="Pages delivered on Earth")
    hits: Optional[HitReport] = None

    @model_validator(mode="after")
    def _check_time_balance(self) -> "SessionOutcome":
        expected = self.earth_time_s + self.wait_time_s
        if not math.isclose(self.mars_time_s, expected, rel_tol=1e-12, abs_tol=1e-6):
            raise ValueError(
                f"Session {self.session_id}: mars_time {self.mars_time_s} != "
                f"earth_time + wait_time = {expected}"
            )
        return self


class SimulationResult(BaseModel):
    """All outcomes of one sessions-sim run, as stored for the report command."""

    policy: str
    lag_min: float = Field(ge=0)
    source: str = ""
    outcomes: List[SessionOutcome] = Field(default_factory=list)


class GainPoint(BaseModel):
    time_s: float = Field(ge=0)
    recall: float = Field(ge=0, le=1)
    docs_shipped: int = Field(ge=0, description="Documents delivered to the assessor so far")
    judged: int = Field(default=0, ge=0, description="Documents judged so far")


class GainCurve(BaseModel):
    """Recall against virtual time, latency included."""

    topic: str
    scenario: str
    rtt_s: float = Field(default=0.0, ge=0)
    total_relevant: int = Field(ge=0)
    points: List[GainPoint] = Field(default_factory=list)
    terminated: bool = Field(
        default=False, description="Run ended because no documents were left anywhere"
    )

    @model_validator(mode="after")
    def _check_monotone(self) -> "GainCurve":
        for a, b in zip(self.points, self.points[1:]):
            if not b.time_s > a.time_s:
                raise ValueError(f"Gain curve {self.topic}: time must strictly increase")
            if b.recall < a.recall:
                raise ValueError(f"Gain curve {self.topic}: recall must not decrease")
        return self

    @property
    def final_recall(self) -> float:
        return self.points[-1].recall if self.points else 0.0


class SessionRatio(BaseModel):
    session_id: str
    E: float
    D: float
    earth_time_s: float
    mars_time_s: float
    earth_pages: int
    pages_transferred: int


class Exclusion(BaseModel):
    session_id: str
    reason: str


class RatioReport(BaseModel):
    """Macro-averaged effort and data ratios for one policy and lag."""

    location: str = "Mars"
    policy: str = "baseline"
    lag_min: float = 0.0
    per_session: List[SessionRatio] = Field(default_factory=list)
    macro_E: float = 1.0
    macro_D: float = 1.0
    avg_time_s: float = 0.0
    avg_pages: float = 0.0
    excluded: List[Exclusion] = Field(default_factory=list)


class TableRow(BaseModel):
    location: str
    lag_min: float
    avg_time_s: float
    avg_pages: float
    E: float
    D: float
    policy: str = ""


class CacheHitReport(BaseModel):
    fraction: Optional[float] = None
    clicked_hits: int = 0
    clicked_total: int = 0
    serp_hits: int = 0
    serp_total: int = 0

    @property
    def clicked_hit_ratio(self) -> Optional[float]:
        return self.clicked_hits / self.clicked_total if self.clicked_total else None

    @property
    def serp_hit_ratio(self) -> Optional[float]:
        return self.serp_hits / self.serp_total if self.serp_total else None


class RunManifest(BaseModel):
    """Provenance of one CLI run."""

    subcommand: str
    argv: List[str] = Field(default_factory=list)
    config: Dict[str, object] = Field(default_factory=dict)
    seed: int
    version: str
    inputs: Dict[str, str] = Field(default_factory=dict, description="path -> sha256")
    outputs: List[str] = Field(default_factory=list)


class SuggestionReport(BaseModel):
    """Verbatim reuse of earlier suggestions within sessions."""

    matches: int = Field(ge=0, description="Later queries equal to an earlier query's suggestion")
    sessions: int = Field(ge=0)
    queries: int = Field(ge=0)
    provider_queries: int = Field(default=0, ge=0, description="Queries the provider knows")
