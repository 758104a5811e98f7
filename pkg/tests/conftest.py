import pytest

CRITERIA: dict[int, str] = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records and prints a pass/fail line, then asserts ``ok``."""
    def record(n: int, ok: bool, detail: str) -> None:
        line = f"CRITERION {n:2d}: {'PASS' if ok else 'FAIL'} - {detail}"
        CRITERIA[n] = line
        print(line)
        assert ok, line
    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for n in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[n])
