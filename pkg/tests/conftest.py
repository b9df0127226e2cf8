"""Shared test plumbing: the acceptance verdict summary.

Acceptance tests record one line per shipped guarantee through
CriterionLog; the terminal-summary hook reprints those lines after the
run, since pytest swallows per-test stdout on success.
"""

import pytest

ACCEPTANCE_LINES = []


class CriterionLog:
    """Context manager that records a PASS/FAIL line for one criterion.

    Tests may set .detail to append measured numbers to the line. A FAIL
    line is recorded when the body raises; the exception still propagates
    so pytest reports the test as failed.
    """

    def __init__(self, number: int, label: str):
        self.number = number
        self.label = label
        self.detail = ""

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        verdict = "PASS" if exc_type is None else "FAIL"
        line = f"criterion {self.number:2d} {verdict}  {self.label}"
        if self.detail:
            line += f"  [{self.detail}]"
        ACCEPTANCE_LINES.append((self.number, line))
        return False


@pytest.fixture
def criterion():
    return CriterionLog


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
