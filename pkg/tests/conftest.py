"""Shared fixtures for marssearch tests."""

from pathlib import Path

import pytest

from marssearch.core.config import CorpusSynthConfig, LogSynthConfig
from marssearch.core.models import (
    Click,
    Corpus,
    Document,
    Interaction,
    InteractionKind,
    ResultEntry,
    Session,
    SessionLog,
    Topic,
)
from marssearch.core.retrieval import build_index, synthesize_corpus
from marssearch.core.sessionlog import query_pool_from_corpus, synthesize_log

FIXTURES = Path(__file__).parent / "fixtures"

LOG_FRAGMENT = b"""<?xml version="1.0" encoding="UTF-8"?>
<sessiontrack2014>
<session num="1" starttime="0.0">
<interaction num="2" starttime="123.2863" type="reformulate">
<query>Indian miss universe political issues.</query>
<results>
<result rank="1">
<url>http://www.thehindu.com/news/national/other-states/</url>
<clueweb12id>clueweb12-1304wb-65-15002</clueweb12id>
<title>Miss Universe contestant</title>
<snippet>Political issues raised by the pageant.</snippet>
</result>
<result rank="2">
<url>http://example.org/pageant</url>
<clueweb12id>clueweb12-0000tw-00-00001</clueweb12id>
</result>
</results>
</interaction>
</session>
</sessiontrack2014>
"""


def make_interaction(num, start, query, results=(), clicks=()):
    """Interaction with results given as docids and clicks as (docid, start, end)."""
    return Interaction(
        num=num,
        starttime_s=start,
        kind=InteractionKind.INITIAL if num == 1 else InteractionKind.REFORMULATE,
        query=query,
        results=[ResultEntry(rank=r, docid=d) for r, d in enumerate(results, 1)],
        clicks=[Click(docid=d, starttime_s=s, endtime_s=e) for d, s, e in clicks],
    )


def make_session(session_id, *interactions):
    return Session(id=session_id, interactions=list(interactions))


@pytest.fixture
def log_fragment():
    """A Session Track style XML fragment with one logged interaction."""
    return LOG_FRAGMENT


@pytest.fixture
def hand_log():
    """Three small sessions covering repeats, shared results and no clicks."""
    return SessionLog(
        sessions=[
            make_session(
                "a",
                make_interaction(1, 0.0, "mars rover", ["d1", "d2", "d3"], [("d1", 20.0, 50.0)]),
                make_interaction(2, 80.0, "mars rover landing", ["d3", "d4"], [("d4", 90.0, 120.0)]),
            ),
            make_session(
                "b",
                make_interaction(1, 5.0, "red planet", ["d5", "d6"]),
                make_interaction(2, 40.0, "red planet", ["d5", "d6"], [("d5", 45.0, 60.0), ("d5", 70.0, 75.0)]),
            ),
            make_session("c", make_interaction(1, 10.0, "olympus mons", ["d7"], [("d9", 30.0, 35.0)])),
        ],
        source="hand",
    )


@pytest.fixture
def tiny_corpus():
    """Five documents on two topics."""
    return Corpus(
        documents=[
            Document(docid="d1", text="mars rover wheels dust", relevant=["t1"]),
            Document(docid="d2", text="rover landing on mars", relevant=["t1"]),
            Document(docid="d3", text="olympus mons volcano", nonrelevant=["t1"]),
            Document(docid="d4", text="red dust storm season", relevant=["t2"]),
            Document(docid="d5", text="", spam=True),
        ],
        topics=[Topic(id="t1", description="mars rover"), Topic(id="t2", description="dust storm")],
    )


@pytest.fixture(scope="session")
def synthetic_corpus():
    """Seeded 600-document corpus with three topics."""
    return synthesize_corpus(CorpusSynthConfig(n_docs=600, n_topics=3, prevalence=0.05, seed=7))


@pytest.fixture(scope="session")
def synthetic_index(synthetic_corpus):
    return build_index(synthetic_corpus)


@pytest.fixture(scope="session")
def synthetic_log(synthetic_corpus, synthetic_index):
    """Seeded 300-session log with topical SERPs over the synthetic corpus."""
    config = LogSynthConfig(
        n_sessions=300, query_pool=query_pool_from_corpus(synthetic_corpus), seed=11
    )
    return synthesize_log(config, synthetic_corpus, synthetic_index)
