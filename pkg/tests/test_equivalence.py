"""Closed-form replays against the event-driven kernel replay."""

import pytest

from marssearch.core.config import LinkConfig, LogSynthConfig, PolicyKind
from marssearch.core.sessionlog import query_pool_from_corpus, synthesize_log
from marssearch.core.strategies import (
    replay_baseline,
    replay_event_driven,
    replay_serp_prefetch,
    replay_static_cache,
)

ROUNDTRIPS_S = (0.0, 480.0, 2880.0)


@pytest.fixture(scope="module")
def long_log(synthetic_corpus, synthetic_index):
    """1000 seeded sessions with topical SERPs."""
    config = LogSynthConfig(
        n_sessions=1000, query_pool=query_pool_from_corpus(synthetic_corpus), seed=1257
    )
    return synthesize_log(config, synthetic_corpus, synthetic_index)


@pytest.fixture(scope="module")
def cache(synthetic_corpus):
    return {doc.docid for doc in synthetic_corpus.documents[::5]}


def _assert_same(closed, oracle):
    assert oracle.session_id == closed.session_id
    assert oracle.pages_transferred == closed.pages_transferred
    assert oracle.blocking_waits == closed.blocking_waits
    assert oracle.wait_time_s == pytest.approx(closed.wait_time_s, abs=1e-6)
    assert oracle.mars_time_s == pytest.approx(closed.mars_time_s, abs=1e-6)


class TestOracleEquivalence:
    """The kernel replay must agree with every closed form."""

    @pytest.mark.parametrize("rtt", ROUNDTRIPS_S)
    def test_baseline(self, long_log, rtt):
        """Test baseline replay against the kernel."""
        link = LinkConfig(rtt / 2)
        for session in long_log.sessions:
            _assert_same(replay_baseline(session, link), replay_event_driven(session, PolicyKind.BASELINE, link))

    @pytest.mark.parametrize("rtt", ROUNDTRIPS_S)
    def test_serp_prefetch(self, long_log, rtt):
        """Test SERP pre-fetching against the kernel."""
        link = LinkConfig(rtt / 2)
        for session in long_log.sessions:
            _assert_same(
                replay_serp_prefetch(session, link),
                replay_event_driven(session, PolicyKind.SERP_PREFETCH, link),
            )

    @pytest.mark.parametrize("rtt", ROUNDTRIPS_S)
    def test_static_cache(self, long_log, cache, rtt):
        """Test the overlap-aware cache replay against the kernel."""
        link = LinkConfig(rtt / 2)
        for session in long_log.sessions:
            _assert_same(
                replay_static_cache(session, cache, link),
                replay_event_driven(session, PolicyKind.STATIC_CACHE, link, cache),
            )

    def test_hand_log(self, hand_log):
        """Test the small fixture under all three policies at both presets."""
        for rtt in (480.0, 2880.0):
            link = LinkConfig(rtt / 2)
            for session in hand_log.sessions:
                _assert_same(replay_baseline(session, link), replay_event_driven(session, "baseline", link))
                _assert_same(replay_serp_prefetch(session, link), replay_event_driven(session, "serp", link))
                _assert_same(
                    replay_static_cache(session, {"d2"}, link),
                    replay_event_driven(session, "cache", link, {"d2"}),
                )
