import pytest

from riskest import dataio

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def synthetic():
    return dataio.generate_synthetic(dataio.GeneratorConfig())


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
