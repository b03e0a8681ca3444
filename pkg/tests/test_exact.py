import numpy as np
import pytest

from avgcmdp.errors import Infeasible, NotErgodic
from avgcmdp.exact import (
    average_utility,
    occupancy_lp,
    optimal_constrained,
    solve_bias,
    span,
    stationary_distribution,
)
from avgcmdp.model import CmdpModel, OccupancyMeasure, StationaryPolicy
from avgcmdp.simulate import make_rng, sample_trajectory

from conftest import two_state_single_action


def test_span_trivials():
    assert span([3.0, 3.0, 3.0]) == 0.0
    assert span([1.0, 0.0]) == 1.0
    assert span([-2.0, 3.0, 0.0]) == 5.0
    with pytest.raises(ValueError):
        span([])


def test_stationary_symmetric_chain(symmetric_chain):
    pol = StationaryPolicy.uniform(2, 2)
    mu = stationary_distribution(pol, symmetric_chain)
    assert mu.state_marginal() == pytest.approx([0.5, 0.5], abs=1e-12)


def test_stationary_detailed_balance():
    model = two_state_single_action(0.2, 0.1)
    pol = StationaryPolicy.uniform(2, 1)
    mu = stationary_distribution(pol, model)
    assert mu.state_marginal() == pytest.approx([1 / 3, 2 / 3], abs=1e-12)


def test_stationary_not_ergodic_raises():
    model = two_state_single_action(0.0, 0.0, ergodic=False)  # absorbing states
    with pytest.raises(NotErgodic):
        stationary_distribution(StationaryPolicy.uniform(2, 1), model)


def test_stationary_matches_long_run_frequencies(small_models):
    """Monte Carlo oracle: visit frequencies of a 1e6-step rollout."""
    model = next(m for m in small_models if m.num_states == 4)
    rng = make_rng(77)
    pol = StationaryPolicy(rng.dirichlet(np.ones(model.num_actions),
                                         size=model.num_states))
    mu = stationary_distribution(pol, model)
    steps = 10**6
    traj = sample_trajectory(model, pol, 0, steps, make_rng(5))
    freq = np.zeros((model.num_states, model.num_actions))
    np.add.at(freq, (traj.states, traj.actions), 1.0)
    freq /= steps
    assert np.max(np.abs(freq - mu.mu)) < 3e-3


def test_average_utility_trivials():
    mu = OccupancyMeasure(np.full((2, 2), 0.25))
    assert average_utility(mu, np.ones((2, 2))) == pytest.approx(1.0)
    assert average_utility(mu, np.zeros((2, 2))) == 0.0
    assert average_utility(mu, np.array([[1.0, 0.0], [0.0, 1.0]])) == pytest.approx(0.5)


def test_solve_bias_constant_utility(small_models):
    model = small_models[0]
    pol = StationaryPolicy.uniform(model.num_states, model.num_actions)
    sol = solve_bias(pol, model, np.full((model.num_states, model.num_actions), 0.7))
    assert sol.gain == pytest.approx(0.7, abs=1e-12)
    assert np.max(np.abs(sol.bias_q)) < 1e-10
    assert np.max(np.abs(sol.bias_v)) < 1e-10


def test_solve_bias_single_state(single_state_model):
    pol = StationaryPolicy(np.array([[0.3, 0.7]]))
    d = np.array([[0.4, 0.9]])
    sol = solve_bias(pol, single_state_model, d)
    assert sol.gain == pytest.approx(0.3 * 0.4 + 0.7 * 0.9)
    assert sol.bias_v == pytest.approx([0.0], abs=1e-12)


def test_solve_bias_invariants(small_models, rng):
    for model in small_models:
        pol = StationaryPolicy(rng.dirichlet(np.ones(model.num_actions),
                                             size=model.num_states))
        d = rng.random((model.num_states, model.num_actions))
        sol = solve_bias(pol, model, d)
        assert sol.residual(model, d) < 1e-9
        mu = stationary_distribution(pol, model)
        assert abs(mu.state_marginal() @ sol.bias_v) < 1e-9
        v_from_q = np.sum(pol.probs * sol.bias_q, axis=1)
        assert np.max(np.abs(v_from_q - sol.bias_v)) < 1e-9


def test_solve_bias_truncated_series_oracle(small_models):
    """v(s) equals the summed deviation of expected utility from the gain."""
    model = next(m for m in small_models if m.num_states == 3)
    rng = make_rng(3)
    pol = StationaryPolicy(rng.dirichlet(np.ones(model.num_actions),
                                         size=model.num_states))
    d = rng.random((model.num_states, model.num_actions))
    sol = solve_bias(pol, model, d)
    p_pi = model.policy_transition(pol)
    d_pi = np.sum(pol.probs * d, axis=1)
    dist = np.eye(model.num_states)  # row s: distribution of s_t given s_0 = s
    acc = np.zeros(model.num_states)
    for _ in range(10**4):
        acc += dist @ d_pi - sol.gain
        dist = dist @ p_pi
    assert np.max(np.abs(acc - sol.bias_v)) < 1e-3


def relative_value_iteration(model, tol=1e-12, max_iter=100000):
    """Unconstrained average-reward optimum by RVI (test oracle)."""
    v = np.zeros(model.num_states)
    for _ in range(max_iter):
        q = model.reward + model.transition @ v
        v_new = q.max(axis=1)
        if span(v_new - v) < tol:
            return (v_new - v)[0]
        v = v_new - v_new.min()
    raise AssertionError("RVI did not converge")


def test_optimal_constrained_matches_rvi_when_unconstrained(small_models):
    for model in small_models[:3]:
        relaxed = CmdpModel(
            num_states=model.num_states, num_actions=model.num_actions,
            reward=model.reward, cost=model.cost, threshold=1.0,
            transition=model.transition, ergodic=True,
        )
        opt = optimal_constrained(relaxed, 0.0)
        assert opt.gain == pytest.approx(relative_value_iteration(relaxed), abs=1e-8)


def test_optimal_constrained_infeasible():
    model = CmdpModel(
        num_states=2, num_actions=2,
        reward=np.full((2, 2), 0.5), cost=np.ones((2, 2)), threshold=0.5,
        transition=np.full((2, 2, 2), 0.5), ergodic=True,
    )
    with pytest.raises(Infeasible):
        optimal_constrained(model, 0.0)


def test_optimal_constrained_grid_oracle(chain2):
    """Vectorized grid search over randomized 2x2 policies at 1e-3 resolution."""
    grid = np.linspace(0.0, 1.0, 1001)
    x, y = np.meshgrid(grid, grid, indexing="ij")  # pi(a0|s0), pi(a0|s1)
    P = chain2.transition
    p01 = x * P[0, 0, 1] + (1 - x) * P[0, 1, 1]
    p10 = y * P[1, 0, 0] + (1 - y) * P[1, 1, 0]
    mu0 = p10 / (p01 + p10)
    mu1 = 1.0 - mu0
    r_pi0 = x * chain2.reward[0, 0] + (1 - x) * chain2.reward[0, 1]
    r_pi1 = y * chain2.reward[1, 0] + (1 - y) * chain2.reward[1, 1]
    c_pi0 = x * chain2.cost[0, 0] + (1 - x) * chain2.cost[0, 1]
    c_pi1 = y * chain2.cost[1, 0] + (1 - y) * chain2.cost[1, 1]
    j_r = mu0 * r_pi0 + mu1 * r_pi1
    j_c = mu0 * c_pi0 + mu1 * c_pi1
    feasible = j_c <= chain2.threshold
    grid_best = j_r[feasible].max()
    opt = optimal_constrained(chain2, 0.0)
    assert opt.gain >= grid_best - 1e-9
    assert abs(opt.gain - grid_best) < 2e-3


def test_policy_extraction_round_trip(small_models):
    for model in small_models:
        opt = optimal_constrained(model, 0.0)
        mu_again = stationary_distribution(opt.policy, model)
        assert np.max(np.abs(mu_again.mu - opt.occupancy.mu)) < 1e-8


def test_value_difference_identity(small_models, rng):
    """J difference equals the occupancy-weighted policy-difference form."""
    for model in small_models:
        S, A = model.num_states, model.num_actions
        for _ in range(4):
            pol_a = StationaryPolicy(rng.dirichlet(np.ones(A), size=S))
            pol_b = StationaryPolicy(rng.dirichlet(np.ones(A), size=S))
            d = rng.random((S, A))
            mu_a = stationary_distribution(pol_a, model)
            bias_b = solve_bias(pol_b, model, d)
            j_a = average_utility(mu_a, d)
            j_b = average_utility(stationary_distribution(pol_b, model), d)
            cross = np.sum(
                mu_a.state_marginal()[:, None]
                * (pol_a.probs - pol_b.probs) * bias_b.bias_q
            )
            assert abs(j_a - j_b - cross) < 1e-8


def test_threshold_shrink_bound(small_models):
    """Tightening the constraint by eps costs at most eps/(tau - c0)."""
    for model in small_models[:3]:
        c_min = float(np.sum(
            occupancy_lp(model, None, model.cost, maximize=False) * model.cost))
        gap = model.threshold - c_min
        if gap <= 1e-6:
            continue
        j0 = optimal_constrained(model, 0.0).gain
        for frac in (0.1, 0.5, 0.9):
            eps = frac * gap
            j_eps = optimal_constrained(model, eps).gain
            assert j0 - j_eps <= eps / gap + 1e-8
