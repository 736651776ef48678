import numpy as np
import pytest

from grid import Domain, build_mesh
from operators import assemble_operators


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: acceptance-scale checks (N = 24, eigen solves)")


@pytest.fixture(scope="session")
def unit_ball():
    return Domain.ball(1.0, 3)


@pytest.fixture(scope="session")
def ball_mesh(unit_ball):
    """Default ball mesh: N = 16 with the aligned box."""
    return build_mesh(unit_ball, 16)


@pytest.fixture(scope="session")
def ball_ops(ball_mesh):
    return assemble_operators(ball_mesh, 0.5)


@pytest.fixture(scope="session")
def small_mesh(unit_ball):
    """Under 200 interior nodes, small enough for all-pairs and dense checks."""
    return build_mesh(unit_ball, 10)


@pytest.fixture(scope="session")
def small_ops(small_mesh):
    return assemble_operators(small_mesh, 0.5)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
