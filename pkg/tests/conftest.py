import pytest

from syncbft.crypto import Keyring
from syncbft.wire import Validator


@pytest.fixture
def ring5():
    return Keyring(5, seed=0)


@pytest.fixture
def val5(ring5):
    return Validator(5, 2, ring5)


ACCEPTANCE_LINES: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> bool:
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
