"""Collects the acceptance verdict lines and repeats them in the terminal summary."""

import pytest

VERDICTS = []


@pytest.fixture
def verdict():
    """``verdict(name, ok, detail)`` records and prints one PASS/FAIL line, then asserts ``ok``."""

    def record(name, ok, detail=""):
        line = f"{'PASS' if ok else 'FAIL'}  {name}" + (f"  ({detail})" if detail else "")
        VERDICTS.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
