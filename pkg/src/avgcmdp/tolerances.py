"""Numerical tolerances used throughout the package, in one place."""

from dataclasses import dataclass


@dataclass(frozen=True)
class Tolerances:
    row_sum: float = 1e-12       # probability rows must sum to 1 within this
    flow: float = 1e-9           # occupancy-measure flow balance
    bellman: float = 1e-9        # bias-solution residuals and normalization
    stationary: float = 1e-10    # stationary-distribution residual
    lp_feasibility: float = 1e-8  # LP constraint residuals on Optimal outputs
    identity: float = 1e-8       # exact algebraic identities checked numerically
    extraction: float = 1e-12    # occupancy mass below which policy rows fall back to uniform
    span_feasibility: float = 1e-6  # span-constraint slack accepted on OPT2 outputs
    edge: float = 1e-12          # transition digraph edge threshold


TOL = Tolerances()
