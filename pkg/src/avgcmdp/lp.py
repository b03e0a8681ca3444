"""Dense linear-program interface shared by the planning oracles and learners.

Maximization convention. Solved with scipy's HiGHS backend, which is
deterministic for identical input; feasibility tolerances are tightened so
Optimal outputs satisfy constraints to 1e-8 or better.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import issparse

from .errors import Infeasible, InvariantViolation, NumericalFailure, Unbounded
from .tolerances import TOL

_HIGHS_OPTIONS = {
    "presolve": True,
    "primal_feasibility_tolerance": 1e-10,
    "dual_feasibility_tolerance": 1e-10,
}


@dataclass(frozen=True)
class LinearProgram:
    """max objective . x  s.t.  a_eq x = b_eq, a_ub x <= b_ub, bounds per variable.

    Constraint matrices may be dense arrays or scipy sparse matrices.
    """

    objective: np.ndarray
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    bounds: list = field(default_factory=list)  # per-variable (lo, hi), None = free side

    def __post_init__(self):
        c = np.asarray(self.objective, dtype=np.float64)
        object.__setattr__(self, "objective", c)
        n = c.size
        if not np.all(np.isfinite(c)):
            raise InvariantViolation("objective must be finite")
        for name in ("a_eq", "a_ub"):
            m = getattr(self, name)
            if m is not None:
                if not issparse(m):
                    m = np.asarray(m, dtype=np.float64)
                    object.__setattr__(self, name, m)
                if m.ndim != 2 or m.shape[1] != n:
                    raise InvariantViolation(f"{name} must have {n} columns")
                rhs = getattr(self, "b" + name[1:])
                if rhs is None or np.asarray(rhs).size != m.shape[0]:
                    raise InvariantViolation(f"{name} and its right-hand side disagree")
        if not self.bounds:
            object.__setattr__(self, "bounds", [(0.0, None)] * n)
        if len(self.bounds) != n:
            raise InvariantViolation("one (lo, hi) bound pair per variable required")
        for lo, hi in self.bounds:
            if lo is not None and hi is not None and lo > hi:
                raise InvariantViolation("variable bounds require lo <= hi")

    @property
    def num_vars(self) -> int:
        return self.objective.size


@dataclass(frozen=True)
class LpSolution:
    status: str  # "optimal" (errors raised otherwise)
    values: np.ndarray
    objective_value: float
    dual_eq: np.ndarray | None = None
    dual_ub: np.ndarray | None = None

    def feasibility_residual(self, lp: LinearProgram) -> float:
        r = 0.0
        x = self.values
        if lp.a_eq is not None:
            r = max(r, float(np.max(np.abs(lp.a_eq @ x - np.asarray(lp.b_eq)))))
        if lp.a_ub is not None:
            r = max(r, float(np.max(np.maximum(lp.a_ub @ x - np.asarray(lp.b_ub), 0.0))))
        for xi, (lo, hi) in zip(x, lp.bounds):
            if lo is not None:
                r = max(r, lo - xi)
            if hi is not None:
                r = max(r, xi - hi)
        return r


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve to optimality; raises Infeasible / Unbounded / NumericalFailure."""
    res = linprog(
        -lp.objective,
        A_ub=lp.a_ub, b_ub=lp.b_ub,
        A_eq=lp.a_eq, b_eq=lp.b_eq,
        bounds=lp.bounds,
        method="highs",
        options=_HIGHS_OPTIONS,
    )
    if res.status == 2:
        raise Infeasible(res.message)
    if res.status == 3:
        raise Unbounded(res.message)
    if res.status != 0 or res.x is None:
        raise NumericalFailure(res.message)
    sol = LpSolution(
        status="optimal",
        values=np.asarray(res.x, dtype=np.float64),
        objective_value=float(-res.fun),
        dual_eq=None if res.eqlin is None else np.asarray(res.eqlin.marginals),
        dual_ub=None if res.ineqlin is None else np.asarray(res.ineqlin.marginals),
    )
    residual = sol.feasibility_residual(lp)
    if residual > TOL.lp_feasibility:
        raise NumericalFailure(f"solution residual {residual:.3e} above tolerance")
    return sol
