from __future__ import annotations

import pytest

from dirplan.fixtures import utc
from support import GOLDEN, FakeClock, World, make_world


@pytest.fixture
def clock():
    return FakeClock(utc(2004, 3, 16))


@pytest.fixture
def world() -> World:
    return make_world()


@pytest.fixture
def golden():
    return GOLDEN


def pytest_terminal_summary(terminalreporter):
    from support import ACCEPTANCE_RESULTS

    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE_RESULTS):
        title, passed, detail = ACCEPTANCE_RESULTS[number]
        line = f"criterion {number:2d} {'PASS' if passed else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
