"""Shared fixtures: canned corpora, mock backends, and path helpers."""

from pathlib import Path

import pytest

from memattr.gateway import MockBackend, load_scenarios
from memattr.kb import KnowledgeBase, make_entry

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture
def kb_path() -> Path:
    return FIXTURES / "kb20.jsonl"


@pytest.fixture
def memes_path() -> Path:
    return FIXTURES / "memes12.jsonl"


@pytest.fixture
def scenarios_path() -> Path:
    return FIXTURES / "scenarios.jsonl"


@pytest.fixture
def mock_backend(scenarios_path) -> MockBackend:
    return MockBackend(scenarios=load_scenarios(scenarios_path))


@pytest.fixture
def bare_backend() -> MockBackend:
    return MockBackend()


def tiny_kb() -> KnowledgeBase:
    # three entries, enough for retrieval plumbing tests
    return KnowledgeBase(
        entries=[
            make_entry(id="a", term="菜狗", category="Others", definition="水平差的人"),
            make_entry(id="b", term="躺平", category="Others", definition="放弃竞争"),
            make_entry(id="c", term="绿茶", category="Sexism", definition="心机深的女性"),
        ]
    )


@pytest.fixture
def small_kb() -> KnowledgeBase:
    return tiny_kb()
