"""Collects one PASS/FAIL line per acceptance criterion and prints them at
the end of the session, whatever the capture mode."""
import pytest

ACCEPTANCE_LINES: dict[int, str] = {}


@pytest.fixture
def report():
    def _report(n: int, ok: bool, detail: str) -> None:
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE_LINES[n] = line
        print(line)
        assert ok, line

    return _report


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
