import sys
from pathlib import Path

import pytest

from spalps.pipeline import compile_file

ROOT = Path(__file__).resolve().parent.parent
CORPUS = ROOT / "corpus"


@pytest.fixture(scope="session")
def corpus_dir() -> Path:
    return CORPUS


@pytest.fixture(scope="session")
def ring():
    return compile_file(CORPUS / "ring.palps")


@pytest.fixture(scope="session")
def dengue():
    return compile_file(CORPUS / "dengue.palps")


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "ACCEPTANCE_LINES", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
