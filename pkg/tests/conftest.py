import pytest

from doubletower.asymptotics import compute_constants
from doubletower.bubble import validate_space
from doubletower.energy import ReducedEnergyModel, make_exponents

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def spec5():
    return validate_space(5, 1, 2.0, 1.0)


@pytest.fixture(scope="session")
def consts5(spec5):
    return compute_constants(spec5)


@pytest.fixture(scope="session")
def exps5(spec5):
    return make_exponents(spec5)


@pytest.fixture(scope="session")
def model64(spec5, consts5, exps5):
    return ReducedEnergyModel(consts5, spec5, exps5, 64)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
