from pathlib import Path

import pytest
from hypothesis import settings

from mirsl import SourceFile, parse_program

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"

settings.register_profile("default", deadline=None)
settings.load_profile("default")


def load(name: str):
    return parse_program(SourceFile.read(CORPUS / name))


@pytest.fixture(scope="session")
def deque():
    return load("deque.mmir")


@pytest.fixture(scope="session")
def cell():
    return load("cell.mmir")


@pytest.fixture(scope="session")
def unsound():
    return load("unsound.mmir")
