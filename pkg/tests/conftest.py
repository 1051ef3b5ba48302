import pytest

CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the verdict of one acceptance criterion for the end-of-run report."""
    def record(number: int, ok: bool, detail: str = "") -> None:
        prev = CRITERIA.get(number, (True, ""))
        CRITERIA[number] = (prev[0] and ok, "; ".join(x for x in (prev[1], detail) if x))
    return record


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(CRITERIA):
        ok, detail = CRITERIA[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
