"""Unified configuration for marssearch simulations."""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, Optional, Set

DEFAULT_SEED = 1257

# Roundtrip lag presets in minutes: planets closest / farthest apart.
RTT_PRESETS_MIN: Set[int] = {8, 48}

BM25_K1 = 0.9
BM25_B = 0.4

READING_SLOPE_S = 0.018
READING_INTERCEPT_S = 7.8

CAL_PRESUMED_NEGATIVES = 100
TRAINING_NEGATIVE_SAMPLE = 3000

DEFAULT_CACHE_FRACTIONS = (0.01, 0.05, 0.10, 0.20)
MAX_SEED = 2**64 - 1


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ValueError(message)


@dataclass(frozen=True)
class LinkConfig:
    """Symmetric Earth-Mars link with a fixed one-way delay in seconds."""

    one_way_delay_s: float = 240.0

    def __post_init__(self):
        _require(
            math.isfinite(self.one_way_delay_s) and self.one_way_delay_s >= 0,
            f"Invalid one_way_delay_s: {self.one_way_delay_s!r} (must be finite and >= 0)",
        )

    @property
    def roundtrip_s(self) -> float:
        return 2.0 * self.one_way_delay_s

    @property
    def rtt_minutes(self) -> float:
        return self.roundtrip_s / 60.0

    @classmethod
    def from_rtt_minutes(cls, minutes: float) -> "LinkConfig":
        _require(
            math.isfinite(minutes) and minutes >= 0,
            f"Invalid rtt_minutes: {minutes!r} (must be finite and >= 0)",
        )
        return cls(one_way_delay_s=minutes * 60.0 / 2.0)


EARTH_LINK = LinkConfig(0.0)
NEAR_LINK = LinkConfig(240.0)
FAR_LINK = LinkConfig(1440.0)


class PolicyKind(str, Enum):
    BASELINE = "baseline"
    SERP_PREFETCH = "serp"
    TOPICAL_PREFETCH = "topical"
    SUGGESTION_PREFETCH = "suggest"
    STATIC_CACHE = "cache"


@dataclass
class PolicyConfig:
    """A latency remediation policy for session replay."""

    kind: PolicyKind = PolicyKind.BASELINE
    k: Optional[int] = None
    cache_fraction: Optional[float] = None
    suggestion_source: Optional[Any] = None
    combine_serp_prefetch: bool = True
    suggestion_depth: int = 8
    serp_depth: int = 10

    def __post_init__(self):
        self.kind = PolicyKind(self.kind)

        topical = self.kind is PolicyKind.TOPICAL_PREFETCH
        _require(
            (self.k is not None) == topical,
            f"k is required for (and only for) the topical policy, got k={self.k!r} "
            f"with policy '{self.kind.value}'",
        )
        if self.k is not None:
            _require(self.k >= 1, f"Invalid k: {self.k} (must be a positive int)")

        cache = self.kind is PolicyKind.STATIC_CACHE
        _require(
            (self.cache_fraction is not None) == cache,
            f"cache_fraction is required for (and only for) the cache policy, got "
            f"cache_fraction={self.cache_fraction!r} with policy '{self.kind.value}'",
        )
        if cache:
            _require(
                0.0 <= self.cache_fraction <= 1.0,
                f"Invalid cache_fraction: {self.cache_fraction} (must be in [0, 1])",
            )
            _require(
                self.combine_serp_prefetch,
                "The cache policy runs on top of SERP pre-fetching; "
                "combine_serp_prefetch must be true",
            )

        if self.kind is PolicyKind.SUGGESTION_PREFETCH:
            _require(
                self.suggestion_source is not None,
                "The suggest policy needs a suggestion_source",
            )
        _require(self.suggestion_depth >= 0, "suggestion_depth must be >= 0")
        _require(self.serp_depth >= 0, "serp_depth must be >= 0")


@dataclass(frozen=True)
class BM25Params:
    k1: float = BM25_K1
    b: float = BM25_B

    def __post_init__(self):
        _require(self.k1 >= 0, f"Invalid k1: {self.k1} (must be >= 0)")
        _require(0.0 <= self.b <= 1.0, f"Invalid b: {self.b} (must be in [0, 1])")


@dataclass(frozen=True)
class QualityParams:
    """Hashed character n-gram logistic model settings."""

    learning_rate: float = 0.002
    passes: int = 1
    hash_bits: int = 20
    ngram: int = 4
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        _require(self.learning_rate > 0, "learning_rate must be > 0")
        _require(self.passes >= 1, "passes must be >= 1")
        _require(1 <= self.hash_bits <= 30, "hash_bits must be in [1, 30]")
        _require(self.ngram >= 1, "ngram must be >= 1")

    @property
    def n_features(self) -> int:
        return 2**self.hash_bits


class ClickModel(str, Enum):
    POSITION = "position"
    QUALITY = "quality"


@dataclass
class LogSynthConfig:
    """Distributions behind a synthetic session log.

    Defaults match the headline counts of the TREC 2014 Session Track log:
    4680 queries and 1685 clicks over 1257 sessions.
    """

    n_sessions: int = 100
    query_pool: list[str] = field(default_factory=list)
    click_model: ClickModel = ClickModel.POSITION
    seed: int = DEFAULT_SEED
    mean_queries: float = 4680 / 1257
    mean_clicks: float = 1685 / 1257
    serp_depth: int = 10
    mean_think_s: float = 30.0
    mean_gap_s: float = 60.0
    mean_click_delay_s: float = 15.0
    mean_dwell_s: float = 40.0
    repeat_query_prob: float = 0.1
    click_temperature: float = 0.25

    def __post_init__(self):
        self.click_model = ClickModel(self.click_model)
        _require(self.n_sessions >= 0, "n_sessions must be >= 0")
        _require(self.mean_queries >= 1, "mean_queries must be >= 1")
        _require(self.mean_clicks >= 0, "mean_clicks must be >= 0")
        _require(self.serp_depth >= 1, "serp_depth must be >= 1")
        _require(0.0 <= self.repeat_query_prob <= 1.0, "repeat_query_prob must be in [0, 1]")
        _require(self.click_temperature > 0, "click_temperature must be > 0")


@dataclass
class CorpusSynthConfig:
    """Shape of a synthetic labelled corpus."""

    n_docs: int = 2000
    n_topics: int = 5
    prevalence: float = 0.05
    spam_fraction: float = 0.05
    judged_fraction: float = 0.3
    mean_length: int = 250
    topic_vocab_size: int = 40
    background_vocab_size: int = 3000
    seed: int = DEFAULT_SEED

    def __post_init__(self):
        _require(self.n_docs >= 1, "n_docs must be >= 1")
        _require(self.n_topics >= 0, "n_topics must be >= 0")
        _require(
            0.0 <= self.prevalence and self.prevalence * self.n_topics + self.spam_fraction <= 1.0,
            "prevalence * n_topics + spam_fraction must not exceed 1",
        )
        _require(0.0 <= self.judged_fraction <= 1.0, "judged_fraction must be in [0, 1]")
        _require(self.mean_length >= 1, "mean_length must be >= 1")


class ScenarioKind(str, Enum):
    EARTH_TAR = "earth"
    EARTH_TAR_LATENCY = "earth-lat"
    MARS_TAR_CACHE = "mars-cache"
    MARS_TAR_NO_CACHE = "mars-nocache"


class ShippingCadence(str, Enum):
    """How Earth feeds Mars in the two-instance scenarios."""

    BATCH = "batch"
    STREAM = "stream"


@dataclass
class RecallScenario:
    kind: ScenarioKind
    link: LinkConfig = field(default_factory=LinkConfig)
    cache_seed: Optional[frozenset[str]] = None
    cadence: ShippingCadence = ShippingCadence.STREAM

    def __post_init__(self):
        self.kind = ScenarioKind(self.kind)
        self.cadence = ShippingCadence(self.cadence)
        if self.cache_seed is not None:
            self.cache_seed = frozenset(self.cache_seed)
        _require(
            (self.cache_seed is not None) == (self.kind is ScenarioKind.MARS_TAR_CACHE),
            f"cache_seed is required for (and only for) the mars-cache scenario, "
            f"got scenario '{self.kind.value}'",
        )


@dataclass(frozen=True)
class StopRule:
    """Stop a recall run at a virtual-time budget and/or a recall target."""

    time_budget_s: Optional[float] = None
    recall_target: Optional[float] = None

    def __post_init__(self):
        if self.time_budget_s is not None:
            _require(self.time_budget_s >= 0, "time_budget_s must be >= 0")
        if self.recall_target is not None:
            _require(0.0 < self.recall_target <= 1.0, "recall_target must be in (0, 1]")


@dataclass
class RecallConfig:
    """Knobs of the continuous active learning engine."""

    seed: int = DEFAULT_SEED
    presumed_negatives: int = CAL_PRESUMED_NEGATIVES
    quality: QualityParams = field(default_factory=QualityParams)

    def __post_init__(self):
        _require(self.presumed_negatives >= 1, "presumed_negatives must be >= 1")


@dataclass
class RunConfig:
    """Reproducibility envelope of one CLI invocation."""

    subcommand: str
    inputs: Dict[str, str] = field(default_factory=dict)
    rtt_minutes: Optional[float] = None
    seed: int = DEFAULT_SEED
    output_dir: str = "output"
    options: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.rtt_minutes is not None:
            _require(
                math.isfinite(self.rtt_minutes) and self.rtt_minutes >= 0,
                f"Invalid --rtt-min: {self.rtt_minutes} (must be >= 0)",
            )
        _require(
            0 <= self.seed <= MAX_SEED,
            f"Invalid --seed: {self.seed} (must be a 64-bit unsigned int)",
        )

    @property
    def link(self) -> LinkConfig:
        return LinkConfig.from_rtt_minutes(self.rtt_minutes or 0.0)


class TableFormat(str, Enum):
    CSV = "csv"
    TSV = "tsv"
