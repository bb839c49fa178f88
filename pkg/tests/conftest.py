import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report():
    """Record one acceptance line: report(number, ok, detail)."""
    def _add(n, ok, detail):
        ACCEPTANCE_LINES.append(f"criterion {n!s:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
    return _add


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
