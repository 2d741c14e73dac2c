"""Tests for configuration validation."""

import math

import pytest

from marssearch.core.config import (
    FAR_LINK,
    NEAR_LINK,
    CorpusSynthConfig,
    LinkConfig,
    LogSynthConfig,
    PolicyConfig,
    PolicyKind,
    QualityParams,
    RecallConfig,
    RecallScenario,
    RunConfig,
    ScenarioKind,
    StopRule,
)


class TestLinkConfig:
    """Tests for the Earth-Mars link."""

    def test_presets_match_roundtrip_minutes(self):
        """Test that the near and far presets are 8 and 48 minute roundtrips."""
        assert NEAR_LINK.rtt_minutes == 8
        assert FAR_LINK.rtt_minutes == 48
        assert FAR_LINK.roundtrip_s == 2880

    def test_from_rtt_minutes(self):
        """Test that a roundtrip in minutes splits into a symmetric one-way delay."""
        assert LinkConfig.from_rtt_minutes(8).one_way_delay_s == 240
        assert LinkConfig.from_rtt_minutes(0).roundtrip_s == 0

    @pytest.mark.parametrize("delay", [-1.0, math.inf, math.nan])
    def test_invalid_delay_rejected(self, delay):
        """Test that negative or non-finite delays are rejected."""
        with pytest.raises(ValueError) as exc_info:
            LinkConfig(delay)
        assert "one_way_delay_s" in str(exc_info.value)


class TestPolicyConfig:
    """Tests for PolicyConfig validation."""

    def test_default_is_baseline(self):
        """Test that the default policy needs no extra parameters."""
        assert PolicyConfig().kind is PolicyKind.BASELINE

    def test_kind_accepts_strings(self):
        """Test that the policy kind is coerced from its CLI spelling."""
        assert PolicyConfig(kind="serp").kind is PolicyKind.SERP_PREFETCH

    def test_topical_requires_k(self):
        """Test that the topical policy needs a positive k."""
        with pytest.raises(ValueError, match="k is required"):
            PolicyConfig(kind=PolicyKind.TOPICAL_PREFETCH)
        with pytest.raises(ValueError, match="Invalid k"):
            PolicyConfig(kind=PolicyKind.TOPICAL_PREFETCH, k=0)
        assert PolicyConfig(kind=PolicyKind.TOPICAL_PREFETCH, k=1000).k == 1000

    def test_k_only_for_topical(self):
        """Test that k with another policy is a usage error."""
        with pytest.raises(ValueError, match="only for"):
            PolicyConfig(kind=PolicyKind.BASELINE, k=10)

    def test_cache_fraction_bounds(self):
        """Test that the cache fraction must lie in [0, 1]."""
        with pytest.raises(ValueError, match="cache_fraction"):
            PolicyConfig(kind=PolicyKind.STATIC_CACHE, cache_fraction=1.5)
        with pytest.raises(ValueError, match="cache_fraction"):
            PolicyConfig(kind=PolicyKind.STATIC_CACHE)
        assert PolicyConfig(kind=PolicyKind.STATIC_CACHE, cache_fraction=0.2).cache_fraction == 0.2

    def test_cache_runs_on_serp_prefetch(self):
        """Test that the cache policy cannot drop SERP pre-fetching."""
        with pytest.raises(ValueError, match="combine_serp_prefetch"):
            PolicyConfig(kind=PolicyKind.STATIC_CACHE, cache_fraction=0.1, combine_serp_prefetch=False)

    def test_suggest_requires_source(self):
        """Test that the suggestion policy needs a provider source."""
        with pytest.raises(ValueError, match="suggestion_source"):
            PolicyConfig(kind=PolicyKind.SUGGESTION_PREFETCH)


class TestRecallScenario:
    """Tests for RecallScenario and StopRule."""

    def test_cache_seed_only_for_mars_cache(self):
        """Test that exactly the mars-cache scenario carries a cache seed."""
        with pytest.raises(ValueError, match="cache_seed"):
            RecallScenario(kind=ScenarioKind.MARS_TAR_CACHE)
        with pytest.raises(ValueError, match="cache_seed"):
            RecallScenario(kind=ScenarioKind.EARTH_TAR, cache_seed={"d1"})

        scenario = RecallScenario(kind="mars-cache", cache_seed=["d1", "d2"])
        assert scenario.kind is ScenarioKind.MARS_TAR_CACHE
        assert scenario.cache_seed == frozenset({"d1", "d2"})

    def test_stop_rule_bounds(self):
        """Test that stop rules reject impossible targets."""
        with pytest.raises(ValueError):
            StopRule(recall_target=0.0)
        with pytest.raises(ValueError):
            StopRule(recall_target=1.2)
        with pytest.raises(ValueError):
            StopRule(time_budget_s=-1)
        assert StopRule(time_budget_s=0, recall_target=1.0).recall_target == 1.0

    def test_recall_config_needs_negatives(self):
        """Test that at least one presumed negative is sampled."""
        with pytest.raises(ValueError, match="presumed_negatives"):
            RecallConfig(presumed_negatives=0)


class TestRunConfig:
    """Tests for the per-invocation config."""

    def test_defaults(self):
        """Test that a bare config is valid and has a zero-latency link."""
        config = RunConfig(subcommand="report")
        assert config.link.roundtrip_s == 0

    def test_link_from_rtt(self):
        """Test that --rtt-min becomes the link roundtrip."""
        assert RunConfig(subcommand="sessions-sim", rtt_minutes=48).link.one_way_delay_s == 1440

    def test_negative_rtt_rejected(self):
        """Test that a negative roundtrip names the flag."""
        with pytest.raises(ValueError) as exc_info:
            RunConfig(subcommand="sessions-sim", rtt_minutes=-8)
        assert "--rtt-min" in str(exc_info.value)

    def test_seed_range(self):
        """Test that seeds must fit in 64 unsigned bits."""
        with pytest.raises(ValueError, match="--seed"):
            RunConfig(subcommand="gen-log", seed=-1)
        with pytest.raises(ValueError, match="--seed"):
            RunConfig(subcommand="gen-log", seed=2**64)


class TestSynthConfigs:
    """Tests for generator settings."""

    def test_log_defaults_match_track_counts(self):
        """Test that the default means are the Session Track 2014 ratios."""
        config = LogSynthConfig()
        assert config.mean_queries == pytest.approx(3.723, abs=1e-3)
        assert config.mean_clicks == pytest.approx(1.340, abs=1e-3)

    def test_corpus_prevalence_bound(self):
        """Test that topics plus spam cannot exceed the corpus."""
        with pytest.raises(ValueError, match="prevalence"):
            CorpusSynthConfig(n_topics=10, prevalence=0.1)

    def test_quality_params(self):
        """Test the hashed feature space size."""
        assert QualityParams().n_features == 2**20
        with pytest.raises(ValueError):
            QualityParams(learning_rate=0)
