"""Shared fixtures: the acceptance-criterion recorder.

Each acceptance test reports one line; the lines are replayed in the terminal
summary so a full run ends with a visible pass/fail row per criterion.
"""
import pytest

_ACCEPTANCE: list[tuple[int, str]] = []


@pytest.fixture
def acceptance():
    """Record and assert one pass/fail line for an acceptance criterion."""

    def _record(criterion: int, passed: bool, detail: str):
        line = f"[{'PASS' if passed else 'FAIL'}] criterion {criterion:>2}: {detail}"
        _ACCEPTANCE.append((criterion, line))
        print(line)
        assert passed, line

    return _record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(_ACCEPTANCE):
            terminalreporter.write_line(line)
