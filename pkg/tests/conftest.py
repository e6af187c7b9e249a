import numpy as np
import pytest
from hypothesis import settings

from hbirl.mdp import FiniteMdp, RewardModel

settings.register_profile("ci", max_examples=30, deadline=None)
settings.load_profile("ci")


def chain_mdp(horizon=2):
    """Two states, actions (stay, move); move flips the state."""
    P = np.zeros((2, 2, 2))
    P[0, 0, 0] = P[1, 0, 1] = 1.0
    P[0, 1, 1] = P[1, 1, 0] = 1.0
    return FiniteMdp(P, np.array([1.0, 0.0]), horizon)


def state_reward(S, A, rewarded):
    phi = np.zeros((S, A, 1))
    phi[rewarded, :, 0] = 1.0
    return RewardModel(phi, np.array([1.0]))


@pytest.fixture
def chain():
    return chain_mdp()


def random_mdp(rng, S, A, horizon, positive=True):
    P = rng.dirichlet(np.ones(S), size=(S, A))
    if not positive:
        P = np.eye(S)[rng.integers(S, size=(S, A))]
    start = rng.dirichlet(np.ones(S))
    return FiniteMdp(P, start, horizon)


def random_features(rng, S, A, K):
    phi = (rng.random((S, A, K)) < 0.4).astype(float)
    return RewardModel(phi, rng.normal(size=K))
