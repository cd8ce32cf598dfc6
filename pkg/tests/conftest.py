import numpy as np
import pytest

from sdviab import cli, kernel
from sdviab.discretization import LtiSystem, SampledDataProblem
from sdviab.geometry import Polytope


@pytest.fixture(scope="session")
def di_config():
    return cli.preset_double_integrator()


@pytest.fixture(scope="session")
def di_problem(di_config):
    return di_config.problem


@pytest.fixture(scope="session")
def di_solver(di_problem):
    return kernel.ViabilitySolver(di_problem)


@pytest.fixture(scope="session")
def di_run(di_config):
    """The preset run shared by several modules (combined pipeline, N = 20)."""
    return cli.run(di_config)


def random_problem(n, seed, m=1, stable=False, delta=0.05, tau=1.0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    if stable:
        A -= (np.max(np.linalg.eigvals(A).real) + 0.5) * np.eye(n)
    B = rng.normal(size=(n, m))
    return SampledDataProblem(
        LtiSystem(A, B), Polytope.inf_ball(n, 1.0), Polytope.box(-np.ones(m), np.ones(m)),
        delta=delta, tau=tau,
    )


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
