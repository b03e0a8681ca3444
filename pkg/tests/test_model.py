import json

import numpy as np
import pytest

from avgcmdp.errors import InvariantViolation, ParseError
from avgcmdp.model import (
    CmdpModel,
    OccupancyMeasure,
    StationaryPolicy,
    chain_period,
    is_ergodic_chain,
    is_irreducible,
    load_model,
    save_model,
)


def valid_kwargs():
    return dict(
        num_states=2, num_actions=2,
        reward=np.array([[0.5, 0.2], [0.1, 0.9]]),
        cost=np.array([[0.3, 0.4], [0.2, 0.1]]),
        threshold=0.5,
        transition=np.full((2, 2, 2), 0.5),
    )


def test_valid_model_constructs():
    model = CmdpModel(**valid_kwargs())
    assert model.num_states == 2
    assert not model.reward.flags.writeable


def test_bad_row_sum_rejected():
    kwargs = valid_kwargs()
    kwargs["transition"] = np.array([[[0.5, 0.49], [0.5, 0.5]],
                                     [[0.5, 0.5], [0.5, 0.5]]])
    with pytest.raises(InvariantViolation, match="transition row"):
        CmdpModel(**kwargs)


def test_reward_range_rejected():
    kwargs = valid_kwargs()
    kwargs["reward"] = np.array([[1.5, 0.2], [0.1, 0.9]])
    with pytest.raises(InvariantViolation, match="reward range"):
        CmdpModel(**kwargs)


def test_threshold_range():
    kwargs = valid_kwargs()
    kwargs["threshold"] = 0.0
    with pytest.raises(InvariantViolation):
        CmdpModel(**kwargs)


def test_ergodicity_flag_checks_deterministic_policies():
    kwargs = valid_kwargs()
    # action 0 is the identity walk: reducible chain
    kwargs["transition"] = np.array([
        [[1.0, 0.0], [0.5, 0.5]],
        [[0.0, 1.0], [0.5, 0.5]],
    ])
    CmdpModel(**kwargs)  # fine without the flag
    with pytest.raises(InvariantViolation, match="ergodicity"):
        CmdpModel(**kwargs, ergodic=True)


def test_periodic_chain_detected():
    flip = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert is_irreducible(flip)
    assert chain_period(flip) == 2
    assert not is_ergodic_chain(flip)
    lazy = np.array([[0.5, 0.5], [0.5, 0.5]])
    assert is_ergodic_chain(lazy)


def test_policy_validation():
    with pytest.raises(InvariantViolation):
        StationaryPolicy(np.array([[0.6, 0.3], [0.5, 0.5]]))
    with pytest.raises(InvariantViolation):
        StationaryPolicy(np.array([[1.2, -0.2], [0.5, 0.5]]))
    pol = StationaryPolicy.deterministic([1, 0], 2)
    assert pol.probs[0, 1] == 1.0


def test_occupancy_validation():
    with pytest.raises(InvariantViolation):
        OccupancyMeasure(np.array([[0.5, 0.4], [0.2, 0.1]]))  # mass 1.2
    mu = OccupancyMeasure(np.array([[0.25, 0.25], [0.25, 0.25]]))
    assert mu.state_marginal() == pytest.approx([0.5, 0.5])


def test_json_round_trip(tmp_path):
    model = CmdpModel(**valid_kwargs(), ergodic=True, t_mix=1, t_hit=2.0, c0=0.1)
    path = tmp_path / "model.json"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.num_states == model.num_states
    assert np.array_equal(loaded.transition, model.transition)
    assert loaded.ergodic and loaded.t_mix == 1 and loaded.c0 == 0.1


def test_load_model_errors(tmp_path):
    missing = tmp_path / "nope.json"
    with pytest.raises(ParseError):
        load_model(missing)
    bad = tmp_path / "bad.json"
    bad.write_text("not json")
    with pytest.raises(ParseError):
        load_model(bad)
    incomplete = tmp_path / "incomplete.json"
    incomplete.write_text(json.dumps({"num_states": 2}))
    with pytest.raises(ParseError):
        load_model(incomplete)


def test_load_model_invariant_violation(tmp_path):
    kwargs = valid_kwargs()
    data = {
        "num_states": 2, "num_actions": 2,
        "reward": kwargs["reward"].tolist(),
        "cost": kwargs["cost"].tolist(),
        "threshold": 0.5,
        "transition": [[[0.5, 0.49], [0.5, 0.5]], [[0.5, 0.5], [0.5, 0.5]]],
    }
    path = tmp_path / "badrow.json"
    path.write_text(json.dumps(data))
    with pytest.raises(InvariantViolation, match="transition row"):
        load_model(path)
