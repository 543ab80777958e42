import numpy as np
import pytest

from photonem.quadrature import STANDARD_GRID, response_matrix

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def standard_response():
    return response_matrix(STANDARD_GRID, 20, 0.85)


@pytest.fixture
def small_instance():
    """Two Fock states, three bins, column-stochastic response."""
    a = np.array([[0.7, 0.2], [0.2, 0.3], [0.1, 0.5]])
    k = np.array([50.0, 30.0, 20.0])
    return a, k


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
