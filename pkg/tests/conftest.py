import pytest

_LINES = []


@pytest.fixture
def report():
    """Record one verdict line for the acceptance summary."""
    return _LINES.append


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(_LINES):
        terminalreporter.write_line(line)
