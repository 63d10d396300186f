from pathlib import Path

import pytest

from borrowlab.driver import default_corpus
from borrowlab.syntax import load_program

CORPUS = default_corpus()


def corpus_programs():
    return sorted(CORPUS.glob("*.llbc"))


@pytest.fixture
def load():
    return load_program


def read(name: str) -> str:
    return (CORPUS / name).read_text()
