import pytest

RESULTS = []


def record(name, ok, detail=""):
    """Log one acceptance line; returns ``ok`` for asserting."""
    line = f"{name}: {'PASS' if ok else 'FAIL'}{'  ' + detail if detail else ''}"
    RESULTS.append(line)
    print(line)
    return ok


@pytest.fixture
def criterion():
    return record


def pytest_terminal_summary(terminalreporter):
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
