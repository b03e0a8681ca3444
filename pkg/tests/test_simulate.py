import numpy as np
import pytest
from scipy.stats import chisquare

from avgcmdp.model import CmdpModel, StationaryPolicy
from avgcmdp.simulate import (
    count_visits,
    empirical_transition,
    make_rng,
    sample_trajectory,
)


def test_deterministic_transition_gives_unique_path():
    transition = np.zeros((2, 1, 2))
    transition[0, 0, 1] = 1.0
    transition[1, 0, 0] = 1.0
    model = CmdpModel(
        num_states=2, num_actions=1,
        reward=np.array([[0.5], [0.25]]), cost=np.zeros((2, 1)), threshold=1.0,
        transition=transition,
    )
    traj = sample_trajectory(model, StationaryPolicy.uniform(2, 1), 0, 6, make_rng(0))
    assert traj.states.tolist() == [0, 1, 0, 1, 0, 1]
    assert traj.rewards.tolist() == [0.5, 0.25] * 3


def test_same_seed_identical(chain2):
    pol = StationaryPolicy.uniform(2, 2)
    a = sample_trajectory(chain2, pol, 0, 500, 42)
    b = sample_trajectory(chain2, pol, 0, 500, 42)
    assert np.array_equal(a.states, b.states)
    assert np.array_equal(a.actions, b.actions)
    assert a.seed == 42


def test_recorded_utilities_match_model(chain2):
    pol = StationaryPolicy.uniform(2, 2)
    traj = sample_trajectory(chain2, pol, 1, 200, make_rng(9))
    assert np.array_equal(traj.rewards, chain2.reward[traj.states, traj.actions])
    assert np.array_equal(traj.costs, chain2.cost[traj.states, traj.actions])
    assert len(traj) == 200


def test_horizon_validation(chain2):
    with pytest.raises(ValueError):
        sample_trajectory(chain2, StationaryPolicy.uniform(2, 2), 0, 0, make_rng(0))


def test_step_indexed_policy(chain2):
    probs = np.zeros((4, 2, 2))
    probs[:2, :, 0] = 1.0
    probs[2:, :, 1] = 1.0
    traj = sample_trajectory(chain2, probs, 0, 4, make_rng(1))
    assert traj.actions.tolist() == [0, 0, 1, 1]


def test_next_state_frequencies_chi_square(chain2):
    """1e5 steps: per-(s,a) next-state frequencies consistent with P."""
    pol = StationaryPolicy.uniform(2, 2)
    steps = 10**5
    traj = sample_trajectory(chain2, pol, 0, steps, make_rng(2024))
    nxt = np.empty(steps, dtype=np.int64)
    nxt[:-1] = traj.states[1:]
    counts = count_visits(traj.states[:-1], traj.actions[:-1], nxt[:-1], 2, 2)
    for s in range(2):
        for a in range(2):
            observed = counts[s, a]
            expected = observed.sum() * chain2.transition[s, a]
            assert observed.sum() > 1000
            _, pvalue = chisquare(observed, expected)
            assert pvalue > 0.001


def test_empirical_transition_zero_counts():
    assert np.array_equal(empirical_transition(np.zeros((2, 2, 2), dtype=int)),
                          np.zeros((2, 2, 2)))


def test_empirical_transition_direct_ratio():
    counts = np.zeros((1, 1, 2), dtype=int)
    counts[0, 0] = [3, 1]
    assert empirical_transition(counts)[0, 0].tolist() == [0.75, 0.25]


def test_empirical_transition_validation():
    with pytest.raises(ValueError):
        empirical_transition(np.array([[[-1, 1]]]))
    with pytest.raises(ValueError):
        empirical_transition(np.array([[[0.5, 0.5]]]))


def test_empirical_transition_converges(chain2):
    pol = StationaryPolicy.uniform(2, 2)
    steps = 10**5
    traj = sample_trajectory(chain2, pol, 0, steps, make_rng(7))
    nxt = np.empty(steps - 1, dtype=np.int64)
    nxt[:] = traj.states[1:]
    counts = count_visits(traj.states[:-1], traj.actions[:-1], nxt, 2, 2)
    p_hat = empirical_transition(counts)
    visited = counts.sum(axis=2) > 0
    assert visited.all()
    assert np.max(np.abs(p_hat - chain2.transition)[visited]) <= 0.02
