import numpy as np
import pytest

from rtlab.grid import PhaseGrid, steady_state
from rtlab.model import make_params, sign_response, smoothed_cone, tanh_response


@pytest.fixture(scope="session")
def ref_params():
    """d = 1, chi = 0.5, sign response, smoothed cone with C = 0, alpha = 1."""
    return make_params(1, 0.5, sign_response(), smoothed_cone(0.0, 1.0, 1))


@pytest.fixture(scope="session")
def tanh_params():
    return make_params(1, 0.5, tanh_response(2.0), smoothed_cone(0.0, 1.0, 1))


@pytest.fixture(scope="session")
def ref_grid():
    return PhaseGrid(1, 10.0, 400, 64)


@pytest.fixture(scope="session")
def small_grid():
    return PhaseGrid(1, 10.0, 200, 32)


@pytest.fixture(scope="session")
def ref_steady(ref_params, ref_grid):
    return steady_state(ref_params, ref_grid, tol=1e-8)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
