import numpy as np
import pytest

from helpers import make_fast_mixing_instance

# Frozen certification fixtures: nearly memoryless 4-state chains with
# asymmetric weak coupling, so small mixing times, kappa1 near 1, and a
# certifiable contraction constant hold at the step sizes the tests use.
FIXTURE_PARAMS = dict(
    n_states=4,
    anchor_weight=0.98,
    coupling_uv=0.06,
    coupling_vu=0.3,
    deviation=0.06,
    noise=0.2,
    vv_level=0.9,
    bb_level=0.85,
)


@pytest.fixture(scope="session")
def fixture_a():
    return make_fast_mixing_instance(dim_u=2, dim_v=2, seed=101, **FIXTURE_PARAMS)


@pytest.fixture(scope="session")
def fixture_b():
    return make_fast_mixing_instance(dim_u=3, dim_v=2, seed=202, **FIXTURE_PARAMS)


@pytest.fixture(scope="session")
def theta0_a():
    return np.ones(4) / 2.0


@pytest.fixture(scope="session")
def theta0_b():
    return np.ones(5) / np.sqrt(5.0)
