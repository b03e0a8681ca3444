import numpy as np
import pytest

from avgcmdp.errors import NotErgodic
from avgcmdp.exact import _stationary_of_chain
from avgcmdp.mixing import MixingProfile, chain_mixing_time, estimate_mixing_time
from avgcmdp.model import CmdpModel


def test_symmetric_chain_mixes_in_one_step(symmetric_chain):
    profile = estimate_mixing_time(symmetric_chain, sample_policies=8)
    assert profile.t_mix == 1
    assert profile.t_hit == pytest.approx(2.0)
    assert "deterministic" in profile.method


def test_lazy_cycle_matches_matrix_power_oracle():
    # 3-state lazy cycle: stay 0.5 / advance 0.5, single action
    p = np.array([
        [0.5, 0.5, 0.0],
        [0.0, 0.5, 0.5],
        [0.5, 0.0, 0.5],
    ])
    model = CmdpModel(
        num_states=3, num_actions=1,
        reward=np.zeros((3, 1)), cost=np.zeros((3, 1)), threshold=1.0,
        transition=p[:, None, :], ergodic=True,
    )
    mu = _stationary_of_chain(p)
    power = p.copy()
    t_oracle = 1
    while np.max(np.abs(power - mu).sum(axis=1)) > 0.25:
        power = power @ p
        t_oracle += 1
    profile = estimate_mixing_time(model, sample_policies=0)
    assert profile.t_mix == t_oracle
    assert chain_mixing_time(p, mu) == t_oracle
    assert profile.t_hit == pytest.approx(3.0)


def test_requires_ergodic_flag(chain2):
    unflagged = CmdpModel(
        num_states=chain2.num_states, num_actions=chain2.num_actions,
        reward=chain2.reward, cost=chain2.cost, threshold=chain2.threshold,
        transition=chain2.transition, ergodic=False,
    )
    with pytest.raises(NotErgodic):
        estimate_mixing_time(unflagged)


def test_profile_invariants():
    with pytest.raises(ValueError):
        MixingProfile(t_mix=0, t_hit=2.0, method="x")


def test_sampling_is_deterministic(chain2):
    a = estimate_mixing_time(chain2, sample_policies=12)
    b = estimate_mixing_time(chain2, sample_policies=12)
    assert (a.t_mix, a.t_hit) == (b.t_mix, b.t_hit)


def test_t_hit_at_least_s(small_models):
    for model in small_models[:2]:
        profile = estimate_mixing_time(model, sample_policies=4)
        assert profile.t_hit >= model.num_states
        assert profile.t_mix >= 1
