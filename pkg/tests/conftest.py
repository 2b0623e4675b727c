from pathlib import Path

import pytest

from kgqa import load_graph

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def graph():
    return load_graph(FIXTURES / "triples.tsv", FIXTURES / "entities.jsonl")


@pytest.fixture(scope="session")
def sym_graph():
    """Same triples, but both Alice Walkers share popularity 500."""
    return load_graph(FIXTURES / "triples.tsv", FIXTURES / "entities_sym.jsonl")


@pytest.fixture(scope="session")
def fixtures_dir():
    return FIXTURES
