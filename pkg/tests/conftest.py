import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mvmdp.core_model import AgentModel, FiniteNoise, StateGrid

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_model(dynamics, cost=None, idio=None, common=None, K_f=0.5, K_c=1.0, beta=0.5,
               state_bounds=((0.0, 1.0),), action_bounds=((0.0, 1.0),), name="test"):
    """Small 1-D model for unit tests; default cost is the state itself."""
    return AgentModel(
        name=name, state_dim=len(state_bounds), action_dim=len(action_bounds),
        dynamics=dynamics, stage_cost=cost or (lambda x, u, mf: x[:, 0]),
        idio_noise=idio or FiniteNoise.none(), common_noise=common or FiniteNoise.none(),
        K_f=K_f, K_c=K_c, beta=beta, state_bounds=state_bounds, action_bounds=action_bounds)


@pytest.fixture
def two_cells():
    return StateGrid([[0.0, 0.5, 1.0]])


@pytest.fixture
def coin_model():
    """Each agent lands in the left or right cell with probability 1/2."""
    return make_model(lambda x, u, mf, wi, w0: wi,
                      idio=FiniteNoise([[0.25], [0.75]], [0.5, 0.5]))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
