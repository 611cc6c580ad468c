import pytest

CRITERIA: dict[int, str] = {}


@pytest.fixture
def report_criterion():
    """Record one acceptance line; printed again in the terminal summary."""

    def record(number: int, passed: bool, detail: str = "") -> None:
        line = f"CRITERION {number}: {'PASS' if passed else 'FAIL'}" + (f"  {detail}" if detail else "")
        CRITERIA[number] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
