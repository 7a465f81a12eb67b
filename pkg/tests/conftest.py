import pathlib

import pytest

from arromatic.lang import parse
from arromatic.typecheck import check_program

PROGRAMS = pathlib.Path(__file__).parent / "programs"

# filled by test_acceptance; echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def load(name: str):
    return check_program(parse((PROGRAMS / name).read_text()).program)


def source(text: str):
    return check_program(parse(text).program)


@pytest.fixture
def programs_dir():
    return PROGRAMS


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
