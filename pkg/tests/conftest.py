import os

import numpy as np
import pytest

from avgcmdp.harness import generate_random_ergodic
from avgcmdp.model import CmdpModel, load_model

MODELS_DIR = os.path.join(os.path.dirname(__file__), os.pardir, "models")


@pytest.fixture(scope="session")
def chain2():
    return load_model(os.path.join(MODELS_DIR, "chain2.json"))


@pytest.fixture(scope="session")
def weak3():
    return load_model(os.path.join(MODELS_DIR, "weak3.json"))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_models():
    """A batch of random ergodic models at assorted sizes."""
    return [
        generate_random_ergodic(S, A, seed=17 * S + A)
        for S, A in [(2, 2), (3, 2), (4, 3), (5, 3), (2, 3)]
    ]


def two_state_single_action(p01: float, p10: float, ergodic: bool = True) -> CmdpModel:
    """Two states, one action, asymmetric flip probabilities."""
    transition = np.array([[[1 - p01, p01]], [[p10, 1 - p10]]])
    return CmdpModel(
        num_states=2, num_actions=1,
        reward=np.array([[1.0], [0.0]]),
        cost=np.array([[0.0], [1.0]]),
        threshold=1.0,
        transition=transition,
        ergodic=ergodic,
    )


@pytest.fixture
def symmetric_chain():
    """Both actions move to each state w.p. 0.5; mixes in one step."""
    transition = np.full((2, 2, 2), 0.5)
    return CmdpModel(
        num_states=2, num_actions=2,
        reward=np.array([[1.0, 0.0], [0.5, 0.5]]),
        cost=np.array([[0.0, 1.0], [0.5, 0.5]]),
        threshold=1.0,
        transition=transition,
        ergodic=True,
    )


@pytest.fixture
def single_state_model():
    return CmdpModel(
        num_states=1, num_actions=2,
        reward=np.array([[0.2, 0.9]]),
        cost=np.array([[0.1, 0.8]]),
        threshold=0.5,
        transition=np.ones((1, 2, 1)),
        ergodic=True,
    )
