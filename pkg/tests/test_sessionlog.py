"""Tests for session log ingest, canonical JSON, statistics and synthesis."""

import json

import numpy as np
import pytest

from conftest import FIXTURES, make_interaction, make_session
from marssearch.core.config import LogSynthConfig
from marssearch.core.models import Corpus, Document, InteractionKind, SessionLog
from marssearch.core.sessionlog import (
    CanonicalVersionError,
    EmptyQueryPoolError,
    LogParseError,
    LogSchemaError,
    earth_pages,
    load_session_log,
    parse_xml_log,
    read_canonical,
    save_session_log,
    session_duration,
    synthesize_log,
    unique_fetches,
    write_canonical,
)


def _golden_log():
    session = make_session("s1", make_interaction(1, 1.5, "mars rover", ["d1"], [("d1", 4.25, 9.5)]))
    session.interactions[0].results[0].url = "http://a/1"
    session.interactions[0].results[0].title = "Rover"
    return SessionLog(sessions=[session], source="golden")


class TestParseXml:
    """Tests for Session Track XML ingest."""

    def test_fragment(self, log_fragment):
        """Test that the logged interaction is read with its first result."""
        log = parse_xml_log(log_fragment)
        assert len(log.sessions) == 1

        interaction = log.sessions[0].interactions[0]
        assert interaction.num == 2
        assert interaction.starttime_s == 123.2863
        assert interaction.kind is InteractionKind.REFORMULATE
        assert interaction.query == "Indian miss universe political issues."
        assert interaction.results[0].docid == "clueweb12-1304wb-65-15002"
        assert interaction.results[0].title == "Miss Universe contestant"
        assert interaction.results[1].snippet is None

    def test_fragment_duration(self, log_fragment):
        """Test that the fragment lasts until its only timestamp."""
        log = parse_xml_log(log_fragment)
        assert session_duration(log.sessions[0]) == 123.2863

    def test_empty_document(self):
        """Test that a document without sessions parses to an empty log."""
        assert parse_xml_log(b"<sessiontrack2014></sessiontrack2014>").sessions == []

    def test_bare_session_root(self):
        """Test that a single <session> element is accepted as the root."""
        data = b'<session num="7"><interaction num="1" starttime="3"><query>q</query></interaction></session>'
        log = parse_xml_log(data)
        assert log.sessions[0].id == "7"
        assert log.sessions[0].interactions[0].kind is InteractionKind.INITIAL

    def test_malformed_xml(self):
        """Test that broken XML reports a line and column."""
        with pytest.raises(LogParseError) as exc_info:
            parse_xml_log(b"<sessiontrack2014>\n<session num='1'>\n</sessiontrack2014>")
        assert exc_info.value.line == 3
        assert "line 3" in str(exc_info.value)

    def test_missing_starttime(self):
        """Test that a missing mandatory attribute names the element."""
        data = b'<session num="1"><interaction num="1"><query>q</query></interaction></session>'
        with pytest.raises(LogSchemaError) as exc_info:
            parse_xml_log(data)
        assert "<interaction>" in str(exc_info.value)
        assert "starttime" in str(exc_info.value)

    def test_missing_rank(self):
        """Test that a result without a rank is a schema error."""
        data = (
            b'<session num="1"><interaction num="1" starttime="0"><query>q</query>'
            b"<results><result><clueweb12id>d1</clueweb12id></result></results>"
            b"</interaction></session>"
        )
        with pytest.raises(LogSchemaError, match="rank"):
            parse_xml_log(data)

    def test_unknown_elements_ignored(self):
        """Test that extra elements and attributes do not break ingest."""
        data = (
            b'<session num="1" userid="u9"><topic>t</topic>'
            b'<interaction num="1" starttime="0" extra="x"><query>q</query><note/></interaction>'
            b"</session>"
        )
        assert len(parse_xml_log(data).sessions[0].interactions) == 1

    def test_click_rank_fallback(self):
        """Test that a click without a docid is resolved through its rank."""
        data = (
            b'<session num="1"><interaction num="1" starttime="10"><query>q</query>'
            b'<results><result rank="1"><clueweb12id>d1</clueweb12id></result>'
            b'<result rank="2"><clueweb12id>d2</clueweb12id></result></results>'
            b'<clicked><click num="1" starttime="20" endtime="30"><rank>2</rank></click>'
            b'<click num="2" starttime="40"></click></clicked>'
            b"</interaction></session>"
        )
        clicks = parse_xml_log(data).sessions[0].interactions[0].clicks
        assert [c.docid for c in clicks] == ["d2"]
        assert clicks[0].endtime_s == 30.0

    @pytest.mark.parametrize("times", ['starttime="soon"', 'starttime="20" endtime="later"'])
    def test_click_time_not_a_number(self, times):
        """Test that a non-numeric click time is a schema error naming the click."""
        data = (
            b'<session num="1"><interaction num="1" starttime="10"><query>q</query>'
            b'<results><result rank="1"><clueweb12id>d1</clueweb12id></result></results>'
            b"<clicked><click " + times.encode() + b"><clueweb12id>d1</clueweb12id></click></clicked>"
            b"</interaction></session>"
        )
        with pytest.raises(LogSchemaError, match="<click>"):
            parse_xml_log(data)

    def test_current_query(self):
        """Test that the trailing <currentquery> becomes a final interaction."""
        data = (
            b'<session num="1"><interaction num="1" starttime="0"><query>first</query></interaction>'
            b'<currentquery starttime="95.5"><query>last</query></currentquery></session>'
        )
        interactions = parse_xml_log(data).sessions[0].interactions
        assert [i.query for i in interactions] == ["first", "last"]
        assert interactions[1].num == 2
        assert interactions[1].kind is InteractionKind.REFORMULATE

        without = parse_xml_log(data, include_current_query=False).sessions[0].interactions
        assert len(without) == 1


class TestCanonicalJson:
    """Tests for the canonical log format."""

    def test_golden_file(self):
        """Test that a one-session log serializes to the pinned bytes."""
        assert write_canonical(_golden_log()) == (FIXTURES / "one_session.json").read_bytes()

    def test_empty_log(self):
        """Test that an empty log still has a sessions list."""
        document = json.loads(write_canonical(SessionLog()))
        assert document["sessions"] == []

    def test_round_trip(self, hand_log):
        """Test that write then read gives back an equal log."""
        assert read_canonical(write_canonical(hand_log)) == hand_log

    def test_xml_round_trip(self, log_fragment):
        """Test that a parsed XML log survives the canonical form."""
        log = parse_xml_log(log_fragment, source="fragment")
        assert read_canonical(write_canonical(log)) == log

    def test_version_mismatch(self):
        """Test that another format version is refused."""
        data = json.dumps({"format": "marssearch.sessionlog", "version": 2, "sessions": []}).encode()
        with pytest.raises(CanonicalVersionError):
            read_canonical(data)

    def test_load_sniffs_format(self, tmp_path, hand_log, log_fragment):
        """Test that files load as XML or JSON by their first byte."""
        json_path = save_session_log(hand_log, tmp_path / "log.json")
        xml_path = tmp_path / "log.xml"
        xml_path.write_bytes(log_fragment)

        assert load_session_log(json_path) == hand_log
        assert load_session_log(xml_path).sessions[0].interactions[0].num == 2


class TestStatistics:
    """Tests for durations and fetch counts."""

    def test_duration_single_query(self):
        """Test that a lone query lasts until its own start."""
        assert session_duration(make_session("s", make_interaction(1, 60.0, "q"))) == 60.0

    def test_duration_includes_click_end(self):
        """Test that the click's end time is the last event."""
        session = make_session("s", make_interaction(1, 60.0, "q", ["d1"], [("d1", 90.0, 150.0)]))
        assert session_duration(session) == 150.0

    def test_unique_fetches(self):
        """Test that queries and clicks are deduplicated."""
        session = make_session(
            "s",
            make_interaction(1, 0.0, "q1", ["a", "b"], [("d1", 5.0, 6.0)]),
            make_interaction(2, 10.0, "q1", ["a", "z"], [("d1", 15.0, 16.0)]),
            make_interaction(3, 20.0, "q2", ["c"]),
        )
        fetches = unique_fetches(session)
        assert fetches.unique_queries == 2
        assert fetches.unique_clicked_pages == 1
        # linked pages come from the first occurrence of each query
        assert fetches.serp_linked_pages == frozenset({"a", "b", "c"})

    def test_no_clicks(self):
        """Test that a session without clicks fetches no pages."""
        assert unique_fetches(make_session("s", make_interaction(1, 0.0, "q"))).unique_clicked_pages == 0

    def test_unique_fetches_brute_force(self, synthetic_log):
        """Test fetch counts against independently built sets."""
        for session in synthetic_log.sessions[:100]:
            queries, clicks = set(), set()
            for interaction in session.interactions:
                queries.add(interaction.query)
                for click in interaction.clicks:
                    clicks.add(click.docid)
            fetches = unique_fetches(session)
            assert fetches.unique_queries == len(queries)
            assert fetches.unique_clicked_pages == len(clicks)

    def test_earth_pages(self, hand_log):
        """Test that Earth pays for every SERP and every click."""
        assert [earth_pages(s) for s in hand_log.sessions] == [4, 4, 2]


class TestSynthesis:
    """Tests for the synthetic log generator."""

    @pytest.fixture
    def corpus(self):
        return Corpus(documents=[Document(docid=f"d{i}", text=f"word{i}") for i in range(5)])

    def test_zero_sessions(self, corpus):
        """Test that no sessions gives an empty log."""
        log = synthesize_log(LogSynthConfig(n_sessions=0, query_pool=["q"]), corpus)
        assert log.sessions == []

    def test_deterministic(self, corpus):
        """Test that the same seed reproduces the same bytes."""
        config = LogSynthConfig(n_sessions=50, query_pool=["a", "b", "c"], seed=3)
        first = write_canonical(synthesize_log(config, corpus))
        second = write_canonical(synthesize_log(config, corpus))
        assert first == second

    def test_empty_pool(self, corpus):
        """Test that a generator without queries refuses to run."""
        with pytest.raises(EmptyQueryPoolError):
            synthesize_log(LogSynthConfig(n_sessions=1), corpus)

    def test_empty_corpus(self):
        """Test that a corpus is needed for SERPs."""
        with pytest.raises(ValueError):
            synthesize_log(LogSynthConfig(n_sessions=1, query_pool=["q"]), Corpus())

    def test_sample_means(self, corpus):
        """Test that 10,000 sessions match the configured means within 5%."""
        config = LogSynthConfig(n_sessions=10_000, query_pool=["a", "b", "c", "d"], seed=5)
        log = synthesize_log(config, corpus)

        queries = np.mean([len(s.interactions) for s in log.sessions])
        clicks = np.mean([sum(len(i.clicks) for i in s.interactions) for s in log.sessions])
        assert queries == pytest.approx(config.mean_queries, rel=0.05)
        assert clicks == pytest.approx(config.mean_clicks, rel=0.05)

    def test_serps_are_stable(self, corpus):
        """Test that a repeated query always shows the same SERP."""
        log = synthesize_log(LogSynthConfig(n_sessions=40, query_pool=["a", "b"], seed=9), corpus)
        serps = {}
        for session in log.sessions:
            for interaction in session.interactions:
                serps.setdefault(interaction.query, interaction.result_docids)
                assert serps[interaction.query] == interaction.result_docids

    def test_sessions_are_valid(self, synthetic_log):
        """Test that generated sessions have ordered times and clicks on their SERP."""
        for session in synthetic_log.sessions:
            times = [i.starttime_s for i in session.interactions]
            assert times == sorted(times)
            for interaction in session.interactions:
                assert len(interaction.results) == 10
                assert {c.docid for c in interaction.clicks} <= set(interaction.result_docids)
