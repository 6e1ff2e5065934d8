import pytest

# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def record_criterion():
    def record(result):
        ACCEPTANCE_LINES.append(result.line())
        return result
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    failed = sum(line.startswith("FAIL") for line in ACCEPTANCE_LINES)
    terminalreporter.write_line(f"{len(ACCEPTANCE_LINES) - failed} passed, {failed} failed")
