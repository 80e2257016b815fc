import pytest

from impulse_solve.model import application_params, reduced_1d_params

# one line per acceptance criterion, printed at the end of the session
ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def reduced():
    return reduced_1d_params()


@pytest.fixture(scope="session")
def app50():
    return application_params(theta=50)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
