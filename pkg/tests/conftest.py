import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from unattended import fixtures


@pytest.fixture(scope="session")
def camera():
    return fixtures.camera_fixture()


@pytest.fixture()
def lock():
    return fixtures.lock_fixture()


@pytest.fixture(scope="session")
def wordlist():
    return fixtures.camera_wordlist()


_ACCEPTANCE = []


@pytest.fixture()
def criterion():
    """Report one acceptance line: ``criterion(n, ok, detail)`` prints and asserts."""
    def report(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        assert ok, line
    return report


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
