from __future__ import annotations

from pathlib import Path

import pytest

from kbfaith.coverage import load_corpus
from kbfaith.entity_linker import load_aliases
from kbfaith.kb_store import load_kb

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def fire_kb():
    return load_kb(FIXTURES / "triples.tsv", FIXTURES / "labels.tsv")


@pytest.fixture(scope="session")
def fire_aliases():
    return load_aliases(FIXTURES / "aliases.tsv")


@pytest.fixture(scope="session")
def fire_doc():
    (doc,) = load_corpus(FIXTURES / "fire_corpus.jsonl")
    return doc
