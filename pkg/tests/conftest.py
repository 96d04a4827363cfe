import pytest

_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; all lines are repeated in the terminal summary."""

    def record(number, ok, detail):
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'} | {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
