"""Simplex kernels: greedy L1-ball linear maximization (the inner step of
extended value iteration) and KL projection onto a floor-truncated simplex
(the mirror-descent policy update)."""

from __future__ import annotations

import numpy as np

from .errors import InfeasibleFloor


def l1_ball_argmax_rows(p_rows: np.ndarray, budgets: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Row-wise argmax of p . u over {p in simplex : ||p - p_row||_1 <= budget}.

    Greedy: shift mass onto the u-best state (ties to the smallest index),
    then strip mass from states in ascending u order. Rows may sum to less
    than one (unvisited empirical rows); their mass deficit is paid out of
    the budget. Budgets below the deficit are completed greedily anyway so
    the output is always a distribution.
    """
    p = np.array(p_rows, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    budgets = np.asarray(budgets, dtype=np.float64)
    order_desc = np.argsort(-u, kind="stable")
    best = order_desc[0]
    total = p.sum(axis=1)
    # raising a single state and trimming elsewhere is always optimal; half
    # the budget (after covering any mass deficit) goes to the best state
    add = np.clip(0.5 * (budgets + (1.0 - total)), 0.0, 1.0 - p[:, best])
    p[:, best] += add
    total += add
    still_short = total < 1.0 - 1e-15  # only when budget < mass deficit: best effort
    if np.any(still_short):
        for s in order_desc:
            add = np.where(still_short, np.minimum(1.0 - total, 1.0 - p[:, s]), 0.0)
            p[:, s] += add
            total += add
            still_short = total < 1.0 - 1e-15
            if not np.any(still_short):
                break
    excess = total - 1.0
    order_asc = np.argsort(u, kind="stable")  # ascending, ties to smallest index
    for s in order_asc:
        take = np.minimum(np.maximum(excess, 0.0), p[:, s])
        p[:, s] -= take
        excess -= take
        if np.all(excess <= 0.0):
            break
    return p


def inner_max_l1(p_hat: np.ndarray, budget: float, u: np.ndarray) -> np.ndarray:
    """Distribution maximizing p . u within L1 distance ``budget`` of ``p_hat``."""
    if budget < 0:
        raise ValueError("budget must be nonnegative")
    out = l1_ball_argmax_rows(
        np.asarray(p_hat, dtype=np.float64)[None, :], np.array([budget]), u
    )
    return out[0]


def kl_project_capped_simplex(weights: np.ndarray, floor: float) -> np.ndarray:
    """argmin of sum_a p(a) ln(p(a)/w(a)) over {p in simplex : p >= floor}.

    Water-filling on the sorted weights: the solution is p = max(floor, w/Z)
    with Z chosen so the free coordinates absorb the leftover mass. Requires
    strictly positive weights and A * floor <= 1.
    """
    w = np.asarray(weights, dtype=np.float64)
    A = w.size
    if np.any(w <= 0):
        raise ValueError("weights must be strictly positive")
    if floor <= 0:
        raise ValueError("floor must be positive")
    if A * floor > 1.0 + 1e-12:
        raise InfeasibleFloor(f"{A} coordinates at floor {floor} exceed total mass 1")
    order = np.argsort(w, kind="stable")  # ascending, ties to smallest index
    sorted_w = w[order]
    suffix = np.cumsum(sorted_w[::-1])[::-1]  # suffix[j] = sum of the A-j largest
    for j in range(A):
        denom = 1.0 - j * floor
        if denom <= 0:
            break
        z = suffix[j] / denom
        if sorted_w[j] / z >= floor:
            p = np.maximum(w / z, floor)
            p[order[:j]] = floor
            return p
    return np.full(A, floor)


def kl_divergence(p: np.ndarray, w: np.ndarray) -> float:
    """sum_a p(a) ln(p(a)/w(a)) (no normalization assumed on w)."""
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    mask = p > 0
    return float(np.sum(p[mask] * np.log(p[mask] / w[mask])))


def kl_kkt_violation(p: np.ndarray, w: np.ndarray, floor: float) -> float:
    """Max KKT residual of p for the floor-truncated KL projection of w.

    Stationarity requires ln(p/w) + 1 to be constant on coordinates above
    the floor, and at least that constant on floored coordinates (so the
    floor multipliers are nonnegative). Also measures feasibility.
    """
    p = np.asarray(p, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    grad = np.log(p / w) + 1.0
    free = p > floor * (1.0 + 1e-9)
    violation = abs(float(p.sum()) - 1.0)
    violation = max(violation, float(np.max(floor - p)))
    if np.any(free):
        alpha = float(np.mean(grad[free]))
        violation = max(violation, float(np.max(np.abs(grad[free] - alpha))))
    else:
        alpha = float(np.min(grad))
    if np.any(~free):
        violation = max(violation, float(np.max(alpha - grad[~free])))
    return violation
