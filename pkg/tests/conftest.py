import pytest

_LINES: list[str] = []


@pytest.fixture(scope="session")
def report():
    """report(n, ok, detail) records one PASS/FAIL line for acceptance criterion n."""

    def emit(n, ok, detail):
        line = f"criterion {n:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        _LINES.append(line)
        print(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter):
    if _LINES:
        terminalreporter.section("acceptance criteria")
        for line in _LINES:
            terminalreporter.write_line(line)
