"""Shared fixtures and the acceptance-criteria reporting hook."""

import pytest

CRITERION_LINES: list[str] = []


def record_criterion(number: int, description: str, passed: bool, detail: str) -> None:
    """Collect one acceptance line; printed in the terminal summary."""
    status = "PASS" if passed else "FAIL"
    CRITERION_LINES.append(f"criterion {number:>2} [{status}] {description}: {detail}")
    assert passed, f"criterion {number} failed: {description}: {detail}"


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERION_LINES):
            terminalreporter.write_line(line)
