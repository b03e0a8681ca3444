"""Finite-horizon approximation for weakly communicating constrained MDPs.

Each episode is treated as an H-step problem over inhomogeneous occupancy
measures nu(s, a, h, s'), a convex polytope. The efficient variant solves a
single LP per episode; the span-constrained variant additionally caps the
span of the induced value functions, a nonconvex restriction handled by
penalized local search seeded at the LP optimum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import sparse

from .errors import Infeasible, InvariantViolation, NoFeasiblePoint
from .lp import LinearProgram, solve_lp
from .model import CmdpModel
from .runlog import ExperimentLog
from .simulate import Environment, count_visits, empirical_transition
from .tolerances import TOL

_OPT2_SEED = 0x0F2B


@dataclass(frozen=True)
class BernsteinSet:
    """Per-(s, a, s') empirical confidence intervals around the empirical
    transition: |P'(s') - center(s')| <= 4 sqrt(center(s') alpha) + 28 alpha."""

    alpha: np.ndarray       # (S, A)
    half_width: np.ndarray  # (S, A, S)
    center: np.ndarray      # (S, A, S) empirical transition

    def contains(self, transition: np.ndarray, slack: float = 1e-12) -> bool:
        return bool(np.all(np.abs(transition - self.center) <= self.half_width + slack))

    @staticmethod
    def exact(transition: np.ndarray) -> "BernsteinSet":
        """Zero-width set centered at a known transition (testing aid)."""
        transition = np.asarray(transition, dtype=np.float64)
        return BernsteinSet(
            alpha=np.zeros(transition.shape[:2]),
            half_width=np.zeros_like(transition),
            center=transition,
        )


def bernstein_confidence(counts: np.ndarray, S: int, A: int, T: int,
                         delta: float) -> BernsteinSet:
    """Confidence set from visit counts; vacuous on unvisited rows."""
    counts = np.asarray(counts)
    pair_counts = counts.sum(axis=2) if counts.ndim == 3 else counts
    iota_prime = math.log(2.0 * S * A * T / delta)
    alpha = iota_prime / np.maximum(1.0, pair_counts)
    center = empirical_transition(counts)
    half_width = 4.0 * np.sqrt(center * alpha[:, :, None]) + 28.0 * alpha[:, :, None]
    return BernsteinSet(alpha=alpha, half_width=half_width, center=center)


@dataclass(frozen=True)
class FiniteHorizonOccupancy:
    """nu(s, a, h, s'): probability of being at (s, a) at step h and moving
    to s'. Feasible points satisfy the three polytope conditions: the first
    layer starts at ``start_state``, every layer carries unit mass, and mass
    flows consistently between consecutive layers."""

    nu: np.ndarray
    start_state: int
    horizon: int

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=np.float64)
        object.__setattr__(self, "nu", nu)
        S, A, H = nu.shape[0], nu.shape[1], self.horizon
        if nu.shape != (S, A, H, S):
            raise InvariantViolation(f"nu must have shape (S, A, {H}, S)")
        tol = TOL.identity
        if np.any(nu < -tol):
            raise InvariantViolation("occupancy entries must be nonnegative")
        first = nu[:, :, 0, :].sum(axis=(1, 2))
        target = np.zeros(S)
        target[self.start_state] = 1.0
        if np.max(np.abs(first - target)) > tol:
            raise InvariantViolation("first layer must start at the given state")
        layer_mass = nu.sum(axis=(0, 1, 3))
        if np.max(np.abs(layer_mass - 1.0)) > tol:
            raise InvariantViolation("every layer must carry unit mass")
        outflow = nu.sum(axis=(0, 1))          # (H, S): mass arriving at s'
        inflow_next = nu.sum(axis=(1, 3)).T    # (H, S): mass leaving s at layer h
        if H > 1 and np.max(np.abs(outflow[:-1] - inflow_next[1:])) > tol:
            raise InvariantViolation("flow conservation fails between layers")

    def pair_mass(self) -> np.ndarray:
        """nu(s, a, h) = sum_s' nu(s, a, h, s')."""
        return self.nu.sum(axis=3)

    def expected_utility(self, d: np.ndarray) -> float:
        return float(np.einsum("sahp,sa->", self.nu, np.asarray(d, dtype=np.float64)))


@dataclass(frozen=True)
class FiniteHorizonPolicy:
    """Step-indexed policy probs[h, s, a] with its extracted transition."""

    probs: np.ndarray       # (H, S, A)
    transition: np.ndarray  # (S, A, H, S)


@dataclass(frozen=True)
class SpanBudget:
    sp_r_star: float
    sp_c_star: float

    def __post_init__(self):
        if self.sp_r_star < 0 or self.sp_c_star < 0:
            raise ValueError("span budgets must be nonnegative")


def _extract_arrays(nu: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    S, A, _, _ = nu.shape
    pair = nu.sum(axis=3)                        # (S, A, H)
    state = pair.sum(axis=1)                     # (S, H)
    probs = np.where(
        state[:, None, :] > TOL.extraction,
        pair / np.where(state[:, None, :] > 0, state[:, None, :], 1.0),
        1.0 / A,
    )
    probs = np.maximum(probs, 0.0)
    probs = probs / probs.sum(axis=1, keepdims=True)
    trans = np.where(
        pair[:, :, :, None] > TOL.extraction,
        nu / np.where(pair[:, :, :, None] > 0, pair[:, :, :, None], 1.0),
        1.0 / S,
    )
    trans = np.maximum(trans, 0.0)
    trans = trans / trans.sum(axis=3, keepdims=True)
    return np.moveaxis(probs, 2, 0), trans


def extract_policy_transition(occupancy: FiniteHorizonOccupancy) -> FiniteHorizonPolicy:
    """Conditional distributions of nu; uniform where the conditioning mass
    is negligible, transition rows renormalized to exact unit sums."""
    probs, trans = _extract_arrays(occupancy.nu)
    return FiniteHorizonPolicy(probs=probs, transition=trans)


@dataclass(frozen=True)
class FhValueTable:
    """Backward-recursion values V[h, s] for h = 1..H+1 (zero final layer)."""

    V: np.ndarray  # (H+1, S)
    Q: np.ndarray  # (H, S, A)

    def layer_spans(self) -> np.ndarray:
        return self.V[:-1].max(axis=1) - self.V[:-1].min(axis=1)


def fh_values(policy: FiniteHorizonPolicy | np.ndarray, transition: np.ndarray,
              d: np.ndarray, H: int) -> FhValueTable:
    """Backward induction: Q_h = d + P_h V_{h+1}, V_h = sum_a pi_h Q_h."""
    probs = policy.probs if isinstance(policy, FiniteHorizonPolicy) else probs_arg(policy)
    transition = np.asarray(transition, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    S, A = d.shape
    V = np.zeros((H + 1, S))
    Q = np.zeros((H, S, A))
    for h in range(H - 1, -1, -1):
        Q[h] = d + transition[:, :, h, :] @ V[h + 1]
        V[h] = np.sum(probs[h] * Q[h], axis=1)
    return FhValueTable(V=V, Q=Q)


def probs_arg(policy) -> np.ndarray:
    probs = np.asarray(policy, dtype=np.float64)
    if probs.ndim != 3:
        raise ValueError("step-indexed policy must have shape (H, S, A)")
    return probs


def replicate_transition(transition: np.ndarray, H: int) -> np.ndarray:
    """Homogeneous (S, A, S) transition as a step-indexed (S, A, H, S) tensor."""
    transition = np.asarray(transition, dtype=np.float64)
    return np.broadcast_to(transition[:, :, None, :],
                           transition.shape[:2] + (H,) + transition.shape[2:]).copy()


def stationary_as_step_policy(probs: np.ndarray, H: int) -> np.ndarray:
    probs = np.asarray(probs, dtype=np.float64)
    return np.broadcast_to(probs[None], (H,) + probs.shape).copy()


def occupancy_of_policy(probs: np.ndarray, transition: np.ndarray, start: int,
                        H: int) -> FiniteHorizonOccupancy:
    """Forward recursion: the unique occupancy of (policy, transition, start)."""
    probs = probs_arg(probs)
    transition = np.asarray(transition, dtype=np.float64)
    S, A = probs.shape[1], probs.shape[2]
    nu = np.zeros((S, A, H, S))
    w = np.zeros(S)
    w[start] = 1.0
    for h in range(H):
        pair = w[:, None] * probs[h]                      # (S, A)
        nu[:, :, h, :] = pair[:, :, None] * transition[:, :, h, :]
        w = nu[:, :, h, :].sum(axis=(0, 1))
    return FiniteHorizonOccupancy(nu=nu, start_state=start, horizon=H)


class _Opt1Builder:
    """Assembles the episode LP; the polytope rows are start-independent and
    only the confidence block changes between episodes."""

    def __init__(self, S: int, A: int, H: int, r: np.ndarray, c: np.ndarray,
                 cost_rhs: float):
        self.S, self.A, self.H = S, A, H
        n = H * S * A * S
        self.n = n

        def flat(h, s, a, sp):
            return ((h * S + s) * A + a) * S + sp

        rows = []
        rhs_kind = []  # ("init", s) | ("mass",) | ("flow",)
        for s in range(S):
            row = np.zeros(n)
            row[flat(0, s, 0, 0):flat(0, s, A - 1, S - 1) + 1] = 1.0
            rows.append(row)
            rhs_kind.append(("init", s))
        for h in range(H):
            row = np.zeros(n)
            row[flat(h, 0, 0, 0):flat(h, S - 1, A - 1, S - 1) + 1] = 1.0
            rows.append(row)
            rhs_kind.append(("mass",))
        for h in range(H - 1):
            for sp in range(S):
                row = np.zeros(n)
                for s in range(S):
                    for a in range(A):
                        row[flat(h, s, a, sp)] += 1.0
                row[flat(h + 1, sp, 0, 0):flat(h + 1, sp, A - 1, S - 1) + 1] -= 1.0
                rows.append(row)
                rhs_kind.append(("flow",))
        self.a_eq = sparse.csr_matrix(np.vstack(rows))
        self._rhs_kind = rhs_kind
        per_layer_r = np.broadcast_to(np.asarray(r)[:, :, None], (S, A, S)).reshape(-1)
        per_layer_c = np.broadcast_to(np.asarray(c)[:, :, None], (S, A, S)).reshape(-1)
        self.objective = np.tile(per_layer_r, H)
        self._cost_row = sparse.csr_matrix(np.tile(per_layer_c, H)[None, :])
        self.cost_rhs = cost_rhs
        self._eye_h = sparse.eye(H, format="csr")

    def b_eq(self, start: int) -> np.ndarray:
        b = np.zeros(self.a_eq.shape[0])
        for i, kind in enumerate(self._rhs_kind):
            if kind[0] == "init":
                b[i] = 1.0 if kind[1] == start else 0.0
            elif kind[0] == "mass":
                b[i] = 1.0
        return b

    def membership_block(self, confidence: BernsteinSet):
        """Linearized confidence membership, kron-expanded over layers:
        |nu(s,a,h,s') - center(s,a,s') nu(s,a,h)| <= width(s,a,s') nu(s,a,h)."""
        S, A = self.S, self.A
        m = S * A * S
        upper = np.zeros((m, m))
        lower = np.zeros((m, m))
        hi = (confidence.center + confidence.half_width).reshape(S * A, S)
        lo = (confidence.center - confidence.half_width).reshape(S * A, S)
        eye = np.eye(S)
        ones = np.ones(S)
        for i in range(S * A):
            block = slice(i * S, (i + 1) * S)
            upper[block, block] = eye - np.outer(hi[i], ones)
            lower[block, block] = -eye + np.outer(lo[i], ones)
        block = sparse.csr_matrix(np.vstack([upper, lower]))
        return sparse.kron(self._eye_h, block, format="csr")

    def build(self, confidence: BernsteinSet, start: int) -> LinearProgram:
        membership = self.membership_block(confidence)
        a_ub = sparse.vstack([self._cost_row, membership], format="csr")
        b_ub = np.zeros(a_ub.shape[0])
        b_ub[0] = self.cost_rhs
        return LinearProgram(
            objective=self.objective,
            a_eq=self.a_eq, b_eq=self.b_eq(start),
            a_ub=a_ub, b_ub=b_ub,
            bounds=[(0.0, None)] * self.n,
        )

    def to_occupancy(self, values: np.ndarray, start: int) -> FiniteHorizonOccupancy:
        nu = values.reshape(self.H, self.S, self.A, self.S)
        nu = np.moveaxis(np.maximum(nu, 0.0), 0, 2)  # (S, A, H, S)
        return FiniteHorizonOccupancy(nu=nu, start_state=start, horizon=self.H)

    def flatten(self, occupancy: FiniteHorizonOccupancy) -> np.ndarray:
        return np.moveaxis(occupancy.nu, 2, 0).reshape(-1)


def solve_opt1(confidence: BernsteinSet, start: int, H: int, tau: float,
               sp_c_star: float, r: np.ndarray, c: np.ndarray) -> FiniteHorizonOccupancy:
    """Maximize expected H-step reward over confidence-compatible occupancy
    measures under the budgeted cost constraint <nu, c> <= H tau + sp*_c."""
    if H < 1:
        raise ValueError("horizon must be at least 1")
    S, A = np.asarray(r).shape
    builder = _Opt1Builder(S, A, H, r, c, H * tau + sp_c_star)
    try:
        sol = solve_lp(builder.build(confidence, start))
    except Infeasible as exc:
        raise Infeasible(
            f"no occupancy measure meets cost budget {H * tau + sp_c_star}: {exc}"
        ) from exc
    return builder.to_occupancy(sol.values, start)


def _value_spans_raw(nu: np.ndarray, d: np.ndarray) -> np.ndarray:
    probs, trans = _extract_arrays(nu)
    table = fh_values(probs, trans, d, nu.shape[2])
    return table.layer_spans()


def value_spans(occupancy: FiniteHorizonOccupancy, d: np.ndarray) -> np.ndarray:
    """Per-layer spans of the value function induced by the extracted
    (policy, transition) pair for utility d."""
    return _value_spans_raw(occupancy.nu, d)


def _span_penalty(spans_r, spans_c, budget: SpanBudget) -> float:
    over_r = np.maximum(spans_r - 2.0 * budget.sp_r_star, 0.0)
    over_c = np.maximum(spans_c - 2.0 * budget.sp_c_star, 0.0)
    return float(np.sum(over_r**2) + np.sum(over_c**2))


def solve_opt2(confidence: BernsteinSet, start: int, H: int, tau: float,
               budget: SpanBudget, r: np.ndarray, c: np.ndarray,
               restarts: int = 20, max_inner: int = 15) -> FiniteHorizonOccupancy:
    """OPT1 plus per-layer span caps 2 sp*_r and 2 sp*_c on the induced value
    functions, a nonconvex restriction.

    Strategy: solve OPT1; if its solution violates a span cap, minimize the
    negated reward plus a quadratic span-violation penalty (weight doubling
    10 -> 1e6) by trust-region linearized descent over the OPT1 polytope,
    restarting from random polytope vertices. Output is verified feasible;
    global optimality is not claimed.
    """
    r = np.asarray(r, dtype=np.float64)
    c = np.asarray(c, dtype=np.float64)
    S, A = r.shape
    base = solve_opt1(confidence, start, H, tau, budget.sp_c_star, r, c)
    slack = TOL.span_feasibility

    def spans(occ):
        return value_spans(occ, r), value_spans(occ, c)

    def feasible(sr, sc):
        return bool(np.all(sr <= 2.0 * budget.sp_r_star + slack)
                    and np.all(sc <= 2.0 * budget.sp_c_star + slack))

    base_sr, base_sc = spans(base)
    if feasible(base_sr, base_sc):
        return base

    builder = _Opt1Builder(S, A, H, r, c, H * tau + budget.sp_c_star)
    lp_template = builder.build(confidence, start)
    rng = np.random.Generator(np.random.Philox(_OPT2_SEED))
    reward_vec = builder.objective

    def evaluate(x):
        """(-reward, penalty, spans) on the raw flattened point."""
        nu = np.maximum(x, 0.0).reshape(H, S, A, S)
        nu = np.moveaxis(nu, 0, 2)
        sr = _value_spans_raw(nu, r)
        sc = _value_spans_raw(nu, c)
        return -float(reward_vec @ x), _span_penalty(sr, sc, budget), sr, sc

    def random_vertex():
        direction = rng.standard_normal(builder.n)
        lp = LinearProgram(
            objective=direction,
            a_eq=lp_template.a_eq, b_eq=lp_template.b_eq,
            a_ub=lp_template.a_ub, b_ub=lp_template.b_ub,
            bounds=lp_template.bounds,
        )
        return solve_lp(lp).values

    best_x: np.ndarray | None = None
    best_value = -np.inf

    def consider(x, neg_obj, sr, sc):
        nonlocal best_x, best_value
        if feasible(sr, sc) and -neg_obj > best_value:
            best_x, best_value = x.copy(), -neg_obj

    starts = [builder.flatten(base)]
    for _ in range(restarts - 1):
        starts.append(random_vertex())
    fd_step = 1e-6
    for x0 in starts:
        x = x0.copy()
        rho = 10.0
        while rho <= 1e6:
            for _ in range(max_inner):
                neg_obj, pen, sr, sc = evaluate(x)
                consider(x, neg_obj, sr, sc)
                f0 = neg_obj + rho * pen
                grad = np.empty(builder.n)
                for i in range(builder.n):
                    xi = x.copy()
                    xi[i] += fd_step
                    n2, p2, _, _ = evaluate(xi)
                    grad[i] = (n2 + rho * p2 - f0) / fd_step
                trust = 0.25
                moved = False
                while trust >= 1e-3 and not moved:
                    lp = LinearProgram(
                        objective=-grad,  # maximize descent = minimize grad . x
                        a_eq=lp_template.a_eq, b_eq=lp_template.b_eq,
                        a_ub=lp_template.a_ub, b_ub=lp_template.b_ub,
                        bounds=[(max(0.0, v - trust), v + trust) for v in x],
                    )
                    target = solve_lp(lp).values
                    for step in (1.0, 0.5, 0.25, 0.125):
                        cand = x + step * (target - x)
                        n2, p2, sr2, sc2 = evaluate(cand)
                        consider(cand, n2, sr2, sc2)
                        if n2 + rho * p2 < f0 - 1e-12:
                            x = cand
                            moved = True
                            break
                    if not moved:
                        trust /= 2.0
                if not moved:
                    break
            rho *= 2.0
    if best_x is None:
        raise NoFeasiblePoint(
            "no occupancy measure satisfied the span caps within the search budget; "
            "the span inputs may be too small for this confidence set"
        )
    result = builder.to_occupancy(best_x, start)
    final_sr, final_sc = spans(result)
    if not feasible(final_sr, final_sc):
        raise NoFeasiblePoint("candidate lost span feasibility on re-verification")
    return result


def fh_horizon(T: int, S: int, A: int, variant: str) -> int:
    if variant == "fh-opt1":
        return max(1, math.ceil((T / (S * S * A)) ** (1.0 / 3.0)))
    if variant == "fh-opt2":
        return max(1, round(math.sqrt(T / (S * S * A))))
    raise ValueError(f"unknown variant {variant!r}")


def run_finite_horizon(model: CmdpModel, variant: str, sp_budget: SpanBudget,
                       T: int, delta: float, rng, start: int = 0,
                       seed: int | None = None) -> ExperimentLog:
    """Run the finite-horizon learner for exactly T steps.

    Every full episode re-solves the episode program at the observed start
    state with the current confidence set; leftover steps replay the last
    policy without updates. An infeasible episode aborts with diagnostics.
    """
    S, A = model.num_states, model.num_actions
    if T < S * S * A:
        raise ValueError("T must be at least S^2 A")
    H = fh_horizon(T, S, A, variant)
    K = T // H
    tau = model.threshold
    env = Environment(model, start, rng)
    counts = np.zeros((S, A, S), dtype=np.int64)
    states = np.empty(T, dtype=np.int64)
    actions = np.empty(T, dtype=np.int64)
    next_states = np.empty(T, dtype=np.int64)
    episodes = []
    builder = _Opt1Builder(S, A, H, model.reward, model.cost,
                           H * tau + sp_budget.sp_c_star)
    last_policy: FiniteHorizonPolicy | None = None
    t = 0
    for k in range(1, K + 1):
        s1 = env.state
        confidence = bernstein_confidence(counts, S, A, T, delta)
        try:
            if variant == "fh-opt1":
                sol = solve_lp(builder.build(confidence, s1))
                occupancy = builder.to_occupancy(sol.values, s1)
            else:
                occupancy = solve_opt2(confidence, s1, H, tau, sp_budget,
                                       model.reward, model.cost)
        except (Infeasible, NoFeasiblePoint) as exc:
            raise type(exc)(f"episode {k} starting at state {s1}: {exc}") from exc
        policy = extract_policy_transition(occupancy)
        spans_r = value_spans(occupancy, model.reward)
        spans_c = value_spans(occupancy, model.cost)
        episodes.append({
            "k": k,
            "start_state": s1,
            "lp_objective": occupancy.expected_utility(model.reward),
            "cost_lhs": occupancy.expected_utility(model.cost),
            "cost_rhs": H * tau + sp_budget.sp_c_star,
            "span_r_max": float(spans_r.max()),
            "span_c_max": float(spans_c.max()),
            "feasible_flag": True,
        })
        lo = t
        cdf = np.cumsum(policy.probs, axis=2)
        for h in range(H):
            s = env.state
            a = env.draw_action(cdf[h, s])
            states[t] = s
            actions[t] = a
            next_states[t] = env.step(a)
            t += 1
        counts += count_visits(states[lo:t], actions[lo:t], next_states[lo:t], S, A)
        last_policy = policy
    h = 0
    while t < T:  # leftover steps replay the last policy (or a one-off solve)
        if last_policy is None:
            confidence = bernstein_confidence(counts, S, A, T, delta)
            sol = solve_lp(builder.build(confidence, env.state))
            last_policy = extract_policy_transition(
                builder.to_occupancy(sol.values, env.state))
        s = env.state
        a = env.draw_action(np.cumsum(last_policy.probs[h % H, s]))
        states[t] = s
        actions[t] = a
        next_states[t] = env.step(a)
        t += 1
        h += 1
    log = ExperimentLog(
        algorithm=variant,
        seed=-1 if seed is None else seed,
        states=states,
        actions=actions,
        rewards=model.reward[states, actions],
        costs=model.cost[states, actions],
        episodes=episodes,
        params={
            "T": T, "H": H, "K": K, "delta": delta, "tau": tau,
            "sp_r_star": sp_budget.sp_r_star, "sp_c_star": sp_budget.sp_c_star,
            "variant": variant,
        },
    )
    return log
