"""Core modules for marssearch simulations."""

from marssearch.core.config import (
    FAR_LINK,
    NEAR_LINK,
    LinkConfig,
    PolicyConfig,
    PolicyKind,
    RecallConfig,
    RecallScenario,
    RunConfig,
    ScenarioKind,
    StopRule,
)
from marssearch.core.kernel import CausalityError, Endpoint, Event, SimKernel
from marssearch.core.models import (
    Corpus,
    Document,
    GainCurve,
    HitReport,
    RatioReport,
    Session,
    SessionLog,
    SessionOutcome,
    SimulationResult,
)
from marssearch.core.runner import Runner
from marssearch.core.strategies import replay, replay_event_driven, replay_log
from marssearch.core.totalrecall import PoolExhausted, run_scenario

__all__ = [
    "FAR_LINK",
    "NEAR_LINK",
    "LinkConfig",
    "PolicyConfig",
    "PolicyKind",
    "RecallConfig",
    "RecallScenario",
    "RunConfig",
    "ScenarioKind",
    "StopRule",
    "CausalityError",
    "Endpoint",
    "Event",
    "SimKernel",
    "Corpus",
    "Document",
    "GainCurve",
    "HitReport",
    "RatioReport",
    "Session",
    "SessionLog",
    "SessionOutcome",
    "SimulationResult",
    "Runner",
    "replay",
    "replay_event_driven",
    "replay_log",
    "PoolExhausted",
    "run_scenario",
]
