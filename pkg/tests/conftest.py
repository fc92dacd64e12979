import pytest

from drawdown.dual import region_boundaries, solve_coefficients
from drawdown.model import ModelParams, derive

# one line per acceptance criterion, shown in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


FIG1 = ModelParams(r=0.05, mu=0.14, sigma=0.35, rho=0.02, R=2.0, b=0.7)
LOG = ModelParams(r=0.05, mu=0.14, sigma=0.35, rho=0.02, R=1.0, b=0.7)
# low risk aversion with rates adjusted so the problem stays well-posed
LOW_R = ModelParams(r=0.05, mu=0.09, sigma=0.35, rho=0.05, R=0.5, b=0.7)


def solve(params):
    return solve_coefficients(derive(params), params)


@pytest.fixture(scope="session")
def fig1_params():
    return FIG1


@pytest.fixture(scope="session")
def fig1_sol():
    return solve(FIG1)


@pytest.fixture(scope="session")
def fig1_bounds(fig1_sol):
    return region_boundaries(fig1_sol)


@pytest.fixture(scope="session")
def log_sol():
    return solve(LOG)


@pytest.fixture(scope="session")
def low_r_sol():
    return solve(LOW_R)
