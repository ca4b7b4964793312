from pathlib import Path

import pytest

from rmlkg import load_mapping

DATA = Path(__file__).parent / "data"


@pytest.fixture
def biomedical_dir():
    return DATA / "biomedical"


@pytest.fixture
def biomedical(biomedical_dir):
    return load_mapping(biomedical_dir / "mapping.ttl")


class ListSink:
    """File-like sink that records each write call."""

    def __init__(self):
        self.chunks = []

    def write(self, text):
        self.chunks.append(text)

    def lines(self):
        return "".join(self.chunks).splitlines(keepends=True)


@pytest.fixture
def sink():
    return ListSink()


ACCEPTANCE: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        terminalreporter.write_line(ACCEPTANCE[n])
