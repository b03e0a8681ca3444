"""Run records: per-step trajectories plus per-episode diagnostics.

A log is sufficient to recompute regret and violation exactly. CSV output
prints floats with 17 significant digits so files round-trip bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvariantViolation
from .model import CmdpModel

EPISODE_SCHEMAS = {
    "ergodic-po": (
        "k", "lambda", "J_hat", "evi_iterations", "bonus_max", "policy_delta",
        "cumulative_reward", "cumulative_cost",
    ),
    "fh-opt1": (
        "k", "start_state", "lp_objective", "cost_lhs", "cost_rhs",
        "span_r_max", "span_c_max", "feasible_flag",
    ),
    "fh-opt2": (
        "k", "start_state", "lp_objective", "cost_lhs", "cost_rhs",
        "span_r_max", "span_c_max", "feasible_flag",
    ),
}


def fmt(value) -> str:
    """Render a scalar for CSV: floats with 17 significant digits."""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return format(float(value), ".17g")


@dataclass
class ExperimentLog:
    """Everything one run produced."""

    algorithm: str
    seed: int
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    episodes: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)

    @property
    def num_steps(self) -> int:
        return self.states.size

    def validate_against(self, model: CmdpModel, T: int | None = None) -> None:
        if T is not None and self.num_steps != T:
            raise InvariantViolation(f"log has {self.num_steps} steps, expected {T}")
        if not np.array_equal(self.rewards, model.reward[self.states, self.actions]):
            raise InvariantViolation("stored rewards disagree with the model")
        if not np.array_equal(self.costs, model.cost[self.states, self.actions]):
            raise InvariantViolation("stored costs disagree with the model")

    def episode_rows(self):
        schema = EPISODE_SCHEMAS[self.algorithm]
        for ep in self.episodes:
            yield [ep[key] for key in schema]


def write_episode_csv(log: ExperimentLog, path) -> None:
    schema = EPISODE_SCHEMAS[log.algorithm]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(schema) + "\n")
        for row in log.episode_rows():
            fh.write(",".join(fmt(v) for v in row) + "\n")
