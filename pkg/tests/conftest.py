import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from aloha_deadline.channel import ROUND_TABLE, SuccessTable  # noqa: E402

_ACCEPTANCE: list = []


@pytest.fixture
def round_table():
    return SuccessTable(ROUND_TABLE)


@pytest.fixture
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")
