import pathlib

import pytest

from graphbm import catalog

CONFIGS = pathlib.Path(__file__).resolve().parent.parent / "configs"


@pytest.fixture
def configs_dir():
    return CONFIGS


@pytest.fixture
def star3():
    return catalog.star(3)


# one line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
