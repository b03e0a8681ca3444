"""Exact planning on a known model: stationary distributions, bias functions,
and constrained-optimal policies via the occupancy-measure linear program."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import Infeasible, NotErgodic, SingularSystem
from .lp import LinearProgram, solve_lp
from .model import CmdpModel, OccupancyMeasure, StationaryPolicy, is_ergodic_chain
from .tolerances import TOL


def span(v) -> float:
    """max(v) - min(v)."""
    v = np.asarray(v, dtype=np.float64)
    if v.size == 0:
        raise ValueError("span of an empty vector is undefined")
    return float(v.max() - v.min())


def _stationary_of_chain(p_pi: np.ndarray) -> np.ndarray:
    """State distribution mu with mu = mu P^pi, sum(mu) = 1, for an ergodic chain."""
    if not is_ergodic_chain(p_pi):
        raise NotErgodic("induced chain is reducible or periodic")
    n = p_pi.shape[0]
    m = np.eye(n) - p_pi.T
    m[-1, :] = 1.0  # replace one (redundant) balance equation with normalization
    b = np.zeros(n)
    b[-1] = 1.0
    try:
        mu = np.linalg.solve(m, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    residual = float(np.max(np.abs(mu @ p_pi - mu)))
    if residual > TOL.stationary:
        raise SingularSystem(f"stationary residual {residual:.3e} above tolerance")
    return mu


def stationary_distribution(policy: StationaryPolicy, model: CmdpModel) -> OccupancyMeasure:
    """Occupancy measure mu(s, a) = mu(s) pi(a|s) of an ergodic induced chain."""
    p_pi = model.policy_transition(policy)
    mu_state = _stationary_of_chain(p_pi)
    return OccupancyMeasure(mu_state[:, None] * policy.probs)


def average_utility(mu: OccupancyMeasure, d: np.ndarray) -> float:
    """Long-run average utility <mu, d> under occupancy measure mu."""
    return float(np.sum(mu.mu * np.asarray(d, dtype=np.float64)))


@dataclass(frozen=True)
class BiasSolution:
    """Gain J plus bias functions (q over state-action pairs, v over states).

    Solves q(s,a) + J = d(s,a) + P(s,a,.) v with v(s) = sum_a pi(a|s) q(s,a),
    normalized so the bias itself has zero gain: <mu_pi, v> = 0.
    """

    gain: float
    bias_q: np.ndarray
    bias_v: np.ndarray

    def residual(self, model: CmdpModel, d: np.ndarray) -> float:
        lhs = self.bias_q + self.gain
        rhs = np.asarray(d) + model.transition @ self.bias_v
        return float(np.max(np.abs(lhs - rhs)))


def solve_bias(policy: StationaryPolicy, model: CmdpModel, d: np.ndarray) -> BiasSolution:
    """Solve the average-reward evaluation equations for (policy, model, d).

    The linear system is v = d^pi - J 1 + P^pi v together with <mu_pi, v> = 0,
    which pins the bias (unique only up to a constant otherwise).
    """
    d = np.asarray(d, dtype=np.float64)
    p_pi = model.policy_transition(policy)
    mu_state = _stationary_of_chain(p_pi)
    n = model.num_states
    d_pi = np.sum(policy.probs * d, axis=1)
    # unknowns (v, J): (I - P^pi) v + J 1 = d^pi ; mu_pi . v = 0
    m = np.zeros((n + 1, n + 1))
    m[:n, :n] = np.eye(n) - p_pi
    m[:n, n] = 1.0
    m[n, :n] = mu_state
    b = np.concatenate([d_pi, [0.0]])
    try:
        sol = np.linalg.solve(m, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    v, gain = sol[:n], float(sol[n])
    q = d - gain + model.transition @ v
    return BiasSolution(gain=gain, bias_q=q, bias_v=v)


@dataclass(frozen=True)
class ConstrainedOptimum:
    """Solution of the stationary constrained program at a given cost slack."""

    policy: StationaryPolicy
    gain: float
    gain_cost: float
    occupancy: OccupancyMeasure


def extract_policy(mu: np.ndarray) -> StationaryPolicy:
    """pi(a|s) = mu(s,a)/mu(s), uniform on states with negligible mass."""
    mu = np.maximum(np.asarray(mu, dtype=np.float64), 0.0)
    mass = mu.sum(axis=1, keepdims=True)
    A = mu.shape[1]
    probs = np.where(mass > TOL.extraction, mu / np.where(mass > 0, mass, 1.0), 1.0 / A)
    probs = probs / probs.sum(axis=1, keepdims=True)
    return StationaryPolicy(probs)


def occupancy_lp(model: CmdpModel, cost_bound: float | None, objective: np.ndarray,
                 maximize: bool = True):
    """LP over stationary occupancy measures: optimize <mu, objective>.

    Constraints: flow balance, total mass 1, mu >= 0, and optionally
    <mu, cost> <= cost_bound. Returns the solved mu matrix.
    """
    S, A = model.num_states, model.num_actions
    n = S * A
    # flow: sum_a mu(s',a) - sum_{s,a} mu(s,a) P(s,a,s') = 0 for each s'
    a_eq = np.zeros((S + 1, n))
    for sp in range(S):
        row = -model.transition[:, :, sp].reshape(n).copy()
        row[sp * A:(sp + 1) * A] += 1.0
        a_eq[sp] = row
    a_eq[S] = 1.0
    b_eq = np.zeros(S + 1)
    b_eq[S] = 1.0
    if cost_bound is not None:
        a_ub = model.cost.reshape(1, n)
        b_ub = np.array([cost_bound])
    else:
        a_ub = None
        b_ub = None
    sign = 1.0 if maximize else -1.0
    lp = LinearProgram(
        objective=sign * np.asarray(objective, dtype=np.float64).reshape(n),
        a_eq=a_eq, b_eq=b_eq, a_ub=a_ub, b_ub=b_ub,
        bounds=[(0.0, None)] * n,
    )
    sol = solve_lp(lp)
    return sol.values.reshape(S, A)


def optimal_constrained(model: CmdpModel, slack: float = 0.0) -> ConstrainedOptimum:
    """Maximize average reward subject to average cost <= threshold - slack.

    Exact for ergodic models, where the stationary occupancy polytope
    coincides with the set of achievable long-run frequencies. With zero
    slack this is the regret baseline.
    """
    if slack < 0:
        raise ValueError("slack must be nonnegative")
    if slack >= model.threshold:
        raise ValueError("slack must be smaller than the threshold")
    try:
        mu = occupancy_lp(model, model.threshold - slack, model.reward)
    except Infeasible as exc:
        raise Infeasible(
            f"no occupancy measure has cost <= {model.threshold - slack}: {exc}"
        ) from exc
    policy = extract_policy(mu)
    occ = OccupancyMeasure(np.maximum(mu, 0.0) / max(mu.sum(), 1e-300))
    gain = float(np.sum(mu * model.reward))
    gain_cost = float(np.sum(mu * model.cost))
    return ConstrainedOptimum(policy=policy, gain=gain, gain_cost=gain_cost, occupancy=occ)


def achievable_cost_range(model: CmdpModel) -> tuple[float, float]:
    """(min, max) achievable long-run average cost over stationary policies."""
    lo = occupancy_lp(model, None, model.cost, maximize=False)
    hi = occupancy_lp(model, None, model.cost, maximize=True)
    return float(np.sum(lo * model.cost)), float(np.sum(hi * model.cost))
