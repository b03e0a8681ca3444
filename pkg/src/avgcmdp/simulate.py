"""Trajectory simulation and empirical transition estimation.

All randomness flows through numpy Generators seeded with the Philox
counter-based 64-bit bit generator, so runs reproduce bit-for-bit across
platforms. Callers own the generator; nothing here touches global state.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import CmdpModel, StationaryPolicy


def make_rng(seed: int) -> np.random.Generator:
    """Portable seeded generator (Philox, counter-based, 64-bit)."""
    return np.random.Generator(np.random.Philox(seed))


def _as_rng(rng) -> tuple[np.random.Generator, int | None]:
    if isinstance(rng, (int, np.integer)):
        return make_rng(int(rng)), int(rng)
    return rng, None


def _draw(cdf_row: np.ndarray, rng: np.random.Generator) -> int:
    return int(np.searchsorted(cdf_row, rng.random(), side="right"))


@dataclass(frozen=True)
class Trajectory:
    """A simulated path of (state, action, reward, cost) steps."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    seed: int | None = None
    policy_id: str = ""

    def __len__(self) -> int:
        return self.states.size


def sample_trajectory(model: CmdpModel, policy, start: int, horizon: int, rng,
                      policy_id: str = "") -> Trajectory:
    """Roll out ``horizon`` steps from ``start`` following ``policy``.

    ``policy`` is a StationaryPolicy, an (S, A) matrix, or an (H, S, A) array
    of per-step action distributions. ``rng`` is a Generator or an integer
    seed; the same seed and inputs reproduce the trajectory exactly.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    rng, seed = _as_rng(rng)
    probs = policy.probs if isinstance(policy, StationaryPolicy) else np.asarray(policy)
    step_indexed = probs.ndim == 3
    policy_cdf = np.cumsum(probs, axis=-1)
    trans_cdf = np.cumsum(model.transition, axis=-1)
    states = np.empty(horizon, dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    s = int(start)
    for t in range(horizon):
        row = policy_cdf[t % probs.shape[0], s] if step_indexed else policy_cdf[s]
        a = _draw(row, rng)
        states[t] = s
        actions[t] = a
        s = _draw(trans_cdf[s, a], rng)
    return Trajectory(
        states=states,
        actions=actions,
        rewards=model.reward[states, actions],
        costs=model.cost[states, actions],
        seed=seed,
        policy_id=policy_id,
    )


class Environment:
    """Online sampling access to a model: the learners only see steps.

    Rewards and costs are known functions; only the transition is hidden
    behind ``step``.
    """

    def __init__(self, model: CmdpModel, start: int, rng):
        self._trans_cdf = np.cumsum(model.transition, axis=-1)
        self._rng, _ = _as_rng(rng)
        self.state = int(start)

    def step(self, action: int) -> int:
        """Advance one step; returns the next state."""
        self.state = _draw(self._trans_cdf[self.state, action], self._rng)
        return self.state

    def draw_action(self, action_cdf: np.ndarray) -> int:
        return _draw(action_cdf, self._rng)


def empirical_transition(counts: np.ndarray) -> np.ndarray:
    """P_hat(s,a,s') = N(s,a,s') / max(1, sum_s'' N(s,a,s'')).

    Rows with zero visits stay identically zero; downstream confidence sets
    are vacuous there, so the non-distribution rows are harmless.
    """
    counts = np.asarray(counts)
    if np.any(counts < 0):
        raise ValueError("counts must be nonnegative")
    if not np.all(np.equal(np.mod(counts, 1), 0)):
        raise ValueError("counts must be integers")
    counts = counts.astype(np.float64)
    denom = np.maximum(1.0, counts.sum(axis=2, keepdims=True))
    return counts / denom


def count_visits(states: np.ndarray, actions: np.ndarray, next_states: np.ndarray,
                 num_states: int, num_actions: int) -> np.ndarray:
    """Tally (s, a, s') visit counts from aligned step arrays."""
    counts = np.zeros((num_states, num_actions, num_states), dtype=np.int64)
    np.add.at(counts, (states, actions, next_states), 1)
    return counts


def visited_rows(counts: np.ndarray) -> np.ndarray:
    """Boolean (S, A) mask of state-action pairs with at least one visit."""
    return counts.sum(axis=2) > 0


__all__ = [
    "Environment",
    "Trajectory",
    "count_visits",
    "empirical_transition",
    "make_rng",
    "sample_trajectory",
    "visited_rows",
]
