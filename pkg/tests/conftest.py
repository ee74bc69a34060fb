from __future__ import annotations

import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None)
settings.load_profile("default")

# (criterion number, verdict line) collected by the acceptance suite
ACCEPTANCE: list[tuple[int, str]] = []


@pytest.fixture
def report():
    def record(number: int, passed: bool, detail: str):
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}  {detail}"
        ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(ACCEPTANCE):
        terminalreporter.write_line(line)
