import pytest

from chaosavg.rounding import hardware_available

ACCEPTANCE_LINES: list[str] = []

requires_hardware = pytest.mark.skipif(
    not hardware_available(), reason="no controllable hardware floating-point environment")


@pytest.fixture
def acceptance_log():
    return ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
