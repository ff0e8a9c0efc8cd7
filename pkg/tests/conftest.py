import pytest

from dfeagg.groups import toy_params


@pytest.fixture(scope="session")
def toy101():
    return toy_params(101)


@pytest.fixture(scope="session")
def toy():
    return toy_params()


@pytest.fixture(scope="session")
def bls():
    from dfeagg.groups import bls12_381_params
    return bls12_381_params()


# One line per acceptance criterion, printed after the run.
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[n])
