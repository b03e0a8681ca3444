"""Online policy optimization for ergodic constrained MDPs.

One learner episode: play the current policy, estimate its action-value
function for the dual-adjusted reward from the episode's own trajectory,
add an optimistic exploration bonus computed by extended value iteration
over a Weissman L1 confidence ball, take a mirror-descent step on the
truncated simplex, and update the dual variable from the empirical cost.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AssumptionViolated,
    InvalidHorizon,
    InvariantViolation,
    NonConvergence,
    NotErgodic,
)
from .exact import span
from .model import CmdpModel, StationaryPolicy
from .projections import kl_project_capped_simplex, l1_ball_argmax_rows
from .runlog import ExperimentLog
from .simulate import Environment, Trajectory, count_visits, empirical_transition

_EVI_ITERATION_CAP = 10**7

PRACTICAL_DEFAULTS = {
    "h_mult": 8.0,      # H = ceil(h_mult * t_mix * t_hit); theory uses 16 (log2 T)^2
    "n_mult": 4.0,      # N = ceil(n_mult * t_mix);         theory uses 4 log2 T
    "eta_mult": 0.0,    # scales the large additive term of eta; 0 leaves eta = 1
    "lambda_mult": 0.025,  # scales lambda = lambda_mult * 40 eta / (tau - c0)
    "theta_mult": 1.0,
    "iota_mult": None,  # None: bonus scale pinned to the score scale, 8 lam (N+1) / (eta H)
}


@dataclass(frozen=True)
class PoParams:
    """Episode schedule and step sizes for the ergodic learner."""

    T: int
    H: int
    N: int
    K: int
    theta: float
    eta: float
    lambda_cap: float
    epsilon: float
    iota: float
    delta: float
    c0: float
    tau: float
    eps_evi: float
    mode: str
    violations: tuple = ()
    knobs: dict = field(default_factory=dict)
    theory_reference: dict | None = None

    def record(self) -> dict:
        out = {
            "T": self.T, "H": self.H, "N": self.N, "K": self.K,
            "theta": self.theta, "eta": self.eta, "lambda_cap": self.lambda_cap,
            "epsilon": self.epsilon, "iota": self.iota, "delta": self.delta,
            "c0": self.c0, "tau": self.tau, "eps_evi": self.eps_evi,
            "mode": self.mode, "violations": list(self.violations),
        }
        if self.knobs:
            out["knobs"] = dict(self.knobs)
        if self.theory_reference is not None:
            out["theory_reference"] = dict(self.theory_reference)
        return out


def _raw_parameters(T, t_mix, t_hit, S, A, tau, c0, delta, mode, knobs):
    gap = tau - c0
    log2T = math.log2(T)
    lnT = math.log(T)
    if mode == "theory":
        H = math.ceil(16.0 * t_mix * t_hit * log2T**2)
        N = math.ceil(4.0 * t_mix * log2T)
    else:
        H = math.ceil(knobs["h_mult"] * t_mix * t_hit)
        N = math.ceil(knobs["n_mult"] * t_mix)
    K = T // H if H <= T else 0
    ln_big = math.log(4.0 * S * A * T**3 / delta)
    eta_term = (
        2.0**10 * gap * N * math.sqrt(S) * ln_big
        * (math.sqrt(S * S * A * T) + math.sqrt(H * T) + S**1.5 * A * H * ln_big)
    )
    if mode == "theory":
        eta = 1.0 + eta_term
        lam = 40.0 * eta / gap
        iota = (2.0 * lam * N / eta) * math.sqrt(S * math.log(2.0 * S * A * T / delta))
    else:
        eta = 1.0 + knobs["eta_mult"] * eta_term
        lam = knobs["lambda_mult"] * 40.0 * eta / gap
        if knobs["iota_mult"] is None:
            iota = 8.0 * lam * (N + 1) / (eta * H)
        else:
            iota = knobs["iota_mult"] * (2.0 * lam * N / eta) * math.sqrt(
                S * math.log(2.0 * S * A * T / delta)
            )
    theta = 0.0
    epsilon = 0.0
    if K >= 1:
        theta = min(1.0 / (4.0 * H * iota), math.sqrt(lnT / (4.0 * K * H * H * iota * iota)))
        if mode != "theory":
            theta *= knobs["theta_mult"]
        epsilon = min(gap / 2.0, 3.0 * lam / K)
    violations = []
    if T < 30 * A * max(t_mix, t_hit):
        violations.append(f"T < 30 A max(t_mix, t_hit) = {30 * A * max(t_mix, t_hit)}")
    if H > T:
        violations.append(f"H = {H} exceeds T = {T}")
    if H < 2 * N:
        violations.append(f"H = {H} below 2N = {2 * N}")
    return dict(
        T=T, H=H, N=N, K=K, theta=theta, eta=eta, lambda_cap=lam,
        epsilon=epsilon, iota=iota, delta=delta, c0=c0, tau=tau,
        eps_evi=1.0 / T, mode=mode, violations=tuple(violations),
    )


def derive_parameters(T: int, t_mix: int, t_hit: float, S: int, A: int,
                      tau: float, c0: float, delta: float,
                      mode: str = "theory", **knob_overrides) -> PoParams:
    """Compute the full parameter schedule for a horizon of T steps.

    Theory mode evaluates the published schedule exactly and raises when it
    cannot run (H > T, or T below the mixing-time assumption). Practical
    mode keeps every functional form but applies multiplicative knobs (see
    PRACTICAL_DEFAULTS); assumption failures are recorded as violation
    flags, and the untouched theory schedule is attached for the log.
    """
    if mode not in ("theory", "practical"):
        raise ValueError(f"unknown mode {mode!r}")
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    if not c0 < tau:
        raise ValueError("c0 must be strictly below the threshold")
    if T < A:
        raise ValueError("T must be at least the number of actions")
    knobs = dict(PRACTICAL_DEFAULTS)
    unknown = set(knob_overrides) - set(knobs)
    if unknown:
        raise ValueError(f"unknown practical-mode knobs: {sorted(unknown)}")
    knobs.update(knob_overrides)
    raw = _raw_parameters(T, t_mix, t_hit, S, A, tau, c0, delta, mode, knobs)
    if mode == "theory":
        if T < 30 * A * max(t_mix, t_hit):
            raise AssumptionViolated(
                f"T = {T} below 30 A max(t_mix, t_hit) = {30 * A * max(t_mix, t_hit)}"
            )
        if raw["H"] > T:
            raise InvalidHorizon(f"episode length H = {raw['H']} exceeds T = {T}")
        if raw["H"] < 2 * raw["N"]:
            raise AssumptionViolated(f"H = {raw['H']} below 2N = {2 * raw['N']}")
        return PoParams(**raw)
    if raw["H"] > T:
        raise InvalidHorizon(f"episode length H = {raw['H']} exceeds T = {T}")
    if raw["H"] < 2 * raw["N"]:
        raise AssumptionViolated(f"H = {raw['H']} below 2N = {2 * raw['N']}")
    if raw["lambda_cap"] < raw["eta"]:
        raise AssumptionViolated(
            "practical knobs give lambda_cap < eta; the adjusted-reward bound needs "
            "lambda_cap / eta >= 1"
        )
    theory_raw = _raw_parameters(T, t_mix, t_hit, S, A, tau, c0, delta, "theory", knobs)
    theory_raw["violations"] = list(theory_raw["violations"])
    return PoParams(**raw, knobs=knobs, theory_reference=theory_raw)


@dataclass(frozen=True)
class QEstimate:
    """Trajectory-based action-value estimate for the current policy."""

    q_hat: np.ndarray
    v_hat: np.ndarray
    intervals_used: np.ndarray


def estimate_q(trajectory: Trajectory, p_hat: np.ndarray, d: np.ndarray, N: int) -> QEstimate:
    """Average cumulative utility over spaced intervals, then one-step backup.

    For each state s, scan the trajectory and whenever s is visited record
    the next N steps' total utility, skipping 2N ahead so intervals are
    separated; V(s) is the mean of those totals (zero if s never starts an
    interval). Returns Q(s, a) = d(s, a) + p_hat(s, a, .) . V.
    """
    if N < 1:
        raise ValueError("interval length N must be at least 1")
    if len(trajectory) < 2 * N:
        raise ValueError("trajectory must contain at least 2N steps")
    d = np.asarray(d, dtype=np.float64)
    S = d.shape[0]
    states = trajectory.states
    dvals = d[states, trajectory.actions]
    H = states.size
    v = np.zeros(S)
    intervals = np.zeros(S, dtype=np.int64)
    for s in range(S):
        tau = 0
        count = 0
        total = 0.0
        while tau <= H - 1 - N:
            if states[tau] == s:
                count += 1
                total += float(dvals[tau:tau + N].sum())
                tau += 2 * N
            else:
                tau += 1
        if count:
            v[s] = total / count
        intervals[s] = count
    q = d + np.asarray(p_hat) @ v
    return QEstimate(q_hat=q, v_hat=v, intervals_used=intervals)


def compute_bonus_reward(counts: np.ndarray, policy: StationaryPolicy, iota: float) -> np.ndarray:
    """Count-based bonus: (1/sqrt(N+(s,a)) + sum_a' pi(a'|s)/sqrt(N+(s,a'))) * iota."""
    if iota < 0:
        raise ValueError("iota must be nonnegative")
    counts = np.asarray(counts)
    pair_counts = counts.sum(axis=2) if counts.ndim == 3 else counts
    inv_sqrt = 1.0 / np.sqrt(np.maximum(1.0, pair_counts))
    mixed = np.sum(policy.probs * inv_sqrt, axis=1, keepdims=True)
    return (inv_sqrt + mixed) * iota


def build_weissman_set(counts: np.ndarray, S: int, A: int, T: int, delta: float) -> np.ndarray:
    """Per-(s,a) L1 radius sqrt(S ln(2SAT/delta) / N+(s,a))."""
    counts = np.asarray(counts)
    pair_counts = counts.sum(axis=2) if counts.ndim == 3 else counts
    ln_term = math.log(2.0 * S * A * T / delta)
    return np.sqrt(S * ln_term / np.maximum(1.0, pair_counts))


@dataclass(frozen=True)
class BonusResult:
    """Optimistic bias of the bonus reward over the confidence ball."""

    u_sa: np.ndarray      # per state-action, used in the policy update
    u_state: np.ndarray   # u at the stopping iterate, shifted to min 0
    u_prev: np.ndarray    # previous iterate, shifted to min 0
    p_opt: np.ndarray     # maximizing transition rows inside the ball
    gain: float           # one-step increment at state 0 at stopping
    iterations: int
    span_residual: float  # span of the final increment, <= eps_evi


def evi_bonus(radii: np.ndarray, p_hat: np.ndarray, policy: StationaryPolicy,
              x_k: np.ndarray, eps_evi: float,
              max_iterations: int = _EVI_ITERATION_CAP) -> BonusResult:
    """Extended value iteration over the L1 confidence ball.

    Iterates u <- sum_a pi(a|s) (x(s,a) + max_{P in ball} P(s,a,.) . u) from
    zero and stops once the increment's span falls to eps_evi; at that point
    every state's increment agrees with the optimistic gain to eps_evi.
    """
    x_k = np.asarray(x_k, dtype=np.float64)
    if np.any(x_k < 0):
        raise ValueError("bonus reward must be nonnegative")
    S, A = x_k.shape
    rows = np.asarray(p_hat, dtype=np.float64).reshape(S * A, S)
    budgets = np.asarray(radii, dtype=np.float64).reshape(S * A)
    u = np.zeros(S)
    for iteration in range(1, max_iterations + 1):
        opt_rows = l1_ball_argmax_rows(rows, budgets, u)
        backed = x_k + (opt_rows @ u).reshape(S, A)
        u_next = np.sum(policy.probs * backed, axis=1)
        increment_span = span(u_next - u)
        if increment_span <= eps_evi:
            shift = float(u_next.min())
            return BonusResult(
                u_sa=backed - shift,
                u_state=u_next - shift,
                u_prev=u - float(u.min()),
                p_opt=opt_rows.reshape(S, A, S),
                gain=float(u_next[0] - u[0]),
                iterations=iteration,
                span_residual=increment_span,
            )
        u = u_next
    raise NonConvergence(f"extended value iteration exceeded {max_iterations} sweeps")


def omd_policy_update(policy: StationaryPolicy, scores: np.ndarray, theta: float,
                      T: int) -> StationaryPolicy:
    """Mirror-descent step: multiplicative weights, KL-projected to the
    simplex truncated at 1/T. Realizes argmax over the truncated simplex of
    <pi, scores> - KL(pi, policy)/theta exactly."""
    if theta <= 0:
        raise ValueError("theta must be positive")
    scores = np.asarray(scores, dtype=np.float64)
    if not np.all(np.isfinite(scores)):
        raise ValueError("scores must be finite")
    # per-state shift keeps exp() in range; the projection is shift-invariant
    shifted = theta * (scores - scores.max(axis=1, keepdims=True))
    weights = policy.probs * np.exp(shifted)
    floor = 1.0 / T
    rows = [kl_project_capped_simplex(weights[s], floor) for s in range(weights.shape[0])]
    return StationaryPolicy(np.vstack(rows))


def dual_update(lambda_k: float, j_hat: float, epsilon: float, tau: float,
                lambda_cap: float) -> float:
    """Projected ascent step on the cost constraint multiplier."""
    if not -1e-12 <= j_hat <= 1 + 1e-12:
        raise ValueError("empirical cost estimate must lie in [0, 1]")
    return min(lambda_cap, max(0.0, lambda_k + j_hat + epsilon - tau))


def run_ergodic_po(model: CmdpModel, params: PoParams, rng, start: int = 0,
                   seed: int | None = None) -> ExperimentLog:
    """Run the learner for exactly params.T environment steps.

    Executes K = floor(T/H) full episodes; leftover steps are played with
    the final policy and counted in the log but trigger no update. The
    model is only sampled through the online step interface.
    """
    if params.violations and params.mode == "theory":
        raise AssumptionViolated("; ".join(params.violations))
    if not model.ergodic:
        raise NotErgodic("the ergodic learner requires an ergodicity-asserted model")
    S, A = model.num_states, model.num_actions
    T, H, N, K = params.T, params.H, params.N, params.K
    env = Environment(model, start, rng)
    policy = StationaryPolicy.uniform(S, A)
    lam = 0.0
    counts = np.zeros((S, A, S), dtype=np.int64)
    states = np.empty(T, dtype=np.int64)
    actions = np.empty(T, dtype=np.int64)
    next_states = np.empty(T, dtype=np.int64)
    episodes = []
    beta_bound = (2.0 * params.lambda_cap / params.eta) * (N + 1)
    t = 0
    for k in range(1, K + 1):
        policy_cdf = np.cumsum(policy.probs, axis=1)
        lo = t
        for _ in range(H):
            s = env.state
            a = env.draw_action(policy_cdf[s])
            states[t] = s
            actions[t] = a
            next_states[t] = env.step(a)
            t += 1
        trajectory = Trajectory(
            states=states[lo:t], actions=actions[lo:t],
            rewards=model.reward[states[lo:t], actions[lo:t]],
            costs=model.cost[states[lo:t], actions[lo:t]],
        )
        p_hat = empirical_transition(counts)
        d = model.reward - (lam / params.eta) * model.cost
        if np.max(np.abs(d)) > 1.0 + params.lambda_cap / params.eta + 1e-12:
            raise InvariantViolation("adjusted reward exceeds 1 + lambda_cap/eta")
        q_est = estimate_q(trajectory, p_hat, d, N)
        if np.max(np.abs(q_est.q_hat)) > beta_bound + 1e-9:
            raise InvariantViolation("action-value estimate exceeds its magnitude bound")
        x_k = compute_bonus_reward(counts, policy, params.iota)
        radii = build_weissman_set(counts, S, A, T, params.delta)
        bonus = evi_bonus(radii, p_hat, policy, x_k, params.eps_evi)
        scores = q_est.q_hat + bonus.u_sa
        new_policy = omd_policy_update(policy, scores, params.theta, T)
        j_hat = float(np.mean(trajectory.costs[N:]))
        new_lam = dual_update(lam, j_hat, params.epsilon, params.tau, params.lambda_cap)
        delta_pi = np.abs(new_policy.probs - policy.probs)
        stab_premise = bool(np.all(params.theta * np.abs(scores) <= 1.0))
        stab_ok = bool(
            np.all(delta_pi <= 8.0 * params.theta * H * params.iota * policy.probs + 1e-12)
        )
        episodes.append({
            "k": k,
            "lambda": lam,
            "lambda_after": new_lam,
            "J_hat": j_hat,
            "evi_iterations": bonus.iterations,
            "evi_span_residual": bonus.span_residual,
            "evi_gain": bonus.gain,
            "bonus_max": float(x_k.max()),
            "policy_delta": float(np.max(delta_pi / policy.probs)),
            "stab_premise": stab_premise,
            "stab_ok": stab_ok,
        })
        counts += count_visits(states[lo:t], actions[lo:t], next_states[lo:t], S, A)
        policy = new_policy
        lam = new_lam
    policy_cdf = np.cumsum(policy.probs, axis=1)
    while t < T:  # leftover steps: keep playing, no update
        s = env.state
        a = env.draw_action(policy_cdf[s])
        states[t] = s
        actions[t] = a
        next_states[t] = env.step(a)
        t += 1
    log = ExperimentLog(
        algorithm="ergodic-po",
        seed=-1 if seed is None else seed,
        states=states,
        actions=actions,
        rewards=model.reward[states, actions],
        costs=model.cost[states, actions],
        episodes=episodes,
        params=params.record(),
    )
    _attach_cumulative(log)
    return log


def _attach_cumulative(log: ExperimentLog) -> None:
    creward = np.cumsum(log.rewards)
    ccost = np.cumsum(log.costs)
    H = log.params["H"]
    for ep in log.episodes:
        upto = min(ep["k"] * H, log.num_steps)
        ep["cumulative_reward"] = float(creward[upto - 1])
        ep["cumulative_cost"] = float(ccost[upto - 1])
