"""Ground-truth CMDP representation, policies, occupancy measures, and model file I/O.

A model is the tuple (S, A, r, c, tau, P): reward and cost matrices over
state-action pairs, a cost threshold, and a transition tensor P(s, a, .)
whose rows are distributions over next states. All objects are immutable
after construction and validated on construction.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import InvariantViolation, ParseError
from .tolerances import TOL

# enumerating A^S deterministic policies is capped at this count
_ENUMERATION_CAP = 1 << 20


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    a.flags.writeable = False
    return a


def transition_digraph(p: np.ndarray, threshold: float = TOL.edge) -> np.ndarray:
    """Boolean adjacency of a row-stochastic matrix, thresholding tiny entries."""
    return np.asarray(p) > threshold


def is_irreducible(p: np.ndarray) -> bool:
    """True iff the digraph of transition matrix p is strongly connected."""
    adj = csr_matrix(transition_digraph(p).astype(np.int8))
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    return n_comp == 1


def chain_period(p: np.ndarray) -> int:
    """Period (gcd of cycle lengths) of an irreducible transition digraph.

    Uses the BFS level trick: the gcd of level[u] + 1 - level[v] over all
    edges u -> v of a strongly connected digraph equals its period.
    """
    adj = transition_digraph(p)
    n = adj.shape[0]
    level = np.full(n, -1, dtype=np.int64)
    level[0] = 0
    frontier = [0]
    g = 0
    while frontier:
        nxt = []
        for u in frontier:
            for v in np.flatnonzero(adj[u]):
                if level[v] < 0:
                    level[v] = level[u] + 1
                    nxt.append(int(v))
                else:
                    g = math.gcd(g, level[u] + 1 - level[v])
        frontier = nxt
    return abs(g) if g != 0 else 0


def is_ergodic_chain(p: np.ndarray) -> bool:
    """True iff the chain with transition matrix p is irreducible and aperiodic."""
    return is_irreducible(p) and chain_period(p) == 1


@dataclass(frozen=True)
class StationaryPolicy:
    """Row-stochastic policy probs[s, a] = pi(a|s)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _freeze(self.probs)
        object.__setattr__(self, "probs", probs)
        if probs.ndim != 2:
            raise InvariantViolation("policy must be an S x A matrix")
        if np.any(probs < 0):
            raise InvariantViolation("policy has negative entries")
        if np.any(np.abs(probs.sum(axis=1) - 1.0) > TOL.row_sum):
            raise InvariantViolation("policy rows must sum to 1")

    @property
    def num_states(self) -> int:
        return self.probs.shape[0]

    @property
    def num_actions(self) -> int:
        return self.probs.shape[1]

    @staticmethod
    def uniform(num_states: int, num_actions: int) -> "StationaryPolicy":
        return StationaryPolicy(np.full((num_states, num_actions), 1.0 / num_actions))

    @staticmethod
    def deterministic(actions, num_actions: int) -> "StationaryPolicy":
        actions = np.asarray(actions, dtype=np.int64)
        probs = np.zeros((actions.size, num_actions))
        probs[np.arange(actions.size), actions] = 1.0
        return StationaryPolicy(probs)


@dataclass(frozen=True)
class OccupancyMeasure:
    """Stationary state-action distribution mu[s, a] with total mass 1."""

    mu: np.ndarray

    def __post_init__(self):
        mu = _freeze(self.mu)
        object.__setattr__(self, "mu", mu)
        if mu.ndim != 2:
            raise InvariantViolation("occupancy measure must be an S x A matrix")
        if np.any(mu < -TOL.flow):
            raise InvariantViolation("occupancy measure has negative entries")
        if abs(mu.sum() - 1.0) > TOL.flow:
            raise InvariantViolation("occupancy measure mass must be 1")

    def state_marginal(self) -> np.ndarray:
        return self.mu.sum(axis=1)

    def flow_residual(self, transition: np.ndarray) -> float:
        """Max violation of sum_a mu(s',a) = sum_{s,a} mu(s,a) P(s,a,s')."""
        inflow = np.einsum("sa,sat->t", self.mu, transition)
        return float(np.max(np.abs(self.state_marginal() - inflow)))


@dataclass(frozen=True)
class CmdpModel:
    """The tuple (S, A, r, c, tau, P) with validity invariants.

    ``ergodic`` asserts that every deterministic stationary policy induces an
    irreducible aperiodic chain (verified on construction); this implies the
    same for every stochastic stationary policy, since a stochastic policy's
    digraph contains some deterministic policy's digraph.
    """

    num_states: int
    num_actions: int
    reward: np.ndarray
    cost: np.ndarray
    threshold: float
    transition: np.ndarray
    ergodic: bool = False
    t_mix: int | None = None
    t_hit: float | None = None
    c0: float | None = None
    safe_policy: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        S, A = self.num_states, self.num_actions
        if S < 1 or A < 1:
            raise InvariantViolation("num_states and num_actions must be positive")
        reward = _freeze(self.reward)
        cost = _freeze(self.cost)
        transition = _freeze(self.transition)
        object.__setattr__(self, "reward", reward)
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "transition", transition)
        if self.safe_policy is not None:
            object.__setattr__(self, "safe_policy", _freeze(self.safe_policy))
        if reward.shape != (S, A):
            raise InvariantViolation(f"reward must have shape {(S, A)}")
        if cost.shape != (S, A):
            raise InvariantViolation(f"cost must have shape {(S, A)}")
        if transition.shape != (S, A, S):
            raise InvariantViolation(f"transition must have shape {(S, A, S)}")
        if np.any(reward < 0) or np.any(reward > 1):
            raise InvariantViolation("reward range: entries must lie in [0, 1]")
        if np.any(cost < 0) or np.any(cost > 1):
            raise InvariantViolation("cost range: entries must lie in [0, 1]")
        if not (0 < self.threshold <= 1):
            raise InvariantViolation("threshold must lie in (0, 1]")
        if np.any(transition < 0):
            raise InvariantViolation("transition row: negative probability")
        bad = np.abs(transition.sum(axis=2) - 1.0) > TOL.row_sum
        if np.any(bad):
            s, a = map(int, np.argwhere(bad)[0])
            raise InvariantViolation(f"transition row ({s}, {a}) does not sum to 1")
        if self.ergodic:
            ok, culprit = self._check_ergodicity()
            if not ok:
                raise InvariantViolation(
                    f"ergodicity asserted but deterministic policy {culprit} "
                    "induces a reducible or periodic chain"
                )

    def _check_ergodicity(self):
        if self.num_actions**self.num_states > _ENUMERATION_CAP:
            raise InvariantViolation(
                "ergodicity check requires enumerating A^S deterministic policies; "
                f"A^S exceeds the cap {_ENUMERATION_CAP}"
            )
        for actions in itertools.product(range(self.num_actions), repeat=self.num_states):
            p_pi = self.transition[np.arange(self.num_states), actions, :]
            if not is_ergodic_chain(p_pi):
                return False, actions
        return True, None

    def policy_transition(self, policy: StationaryPolicy) -> np.ndarray:
        """Chain P^pi with P^pi[s, s'] = sum_a pi(a|s) P(s, a, s')."""
        return np.einsum("sa,sat->st", policy.probs, self.transition)

    def to_dict(self) -> dict:
        out = {
            "num_states": self.num_states,
            "num_actions": self.num_actions,
            "reward": self.reward.tolist(),
            "cost": self.cost.tolist(),
            "threshold": self.threshold,
            "transition": self.transition.tolist(),
            "ergodic": self.ergodic,
        }
        if self.t_mix is not None:
            out["t_mix"] = self.t_mix
        if self.t_hit is not None:
            out["t_hit"] = self.t_hit
        if self.c0 is not None:
            out["c0"] = self.c0
        if self.safe_policy is not None:
            out["safe_policy"] = self.safe_policy.tolist()
        return out

    @staticmethod
    def from_dict(data: dict) -> "CmdpModel":
        try:
            return CmdpModel(
                num_states=int(data["num_states"]),
                num_actions=int(data["num_actions"]),
                reward=np.array(data["reward"], dtype=np.float64),
                cost=np.array(data["cost"], dtype=np.float64),
                threshold=float(data["threshold"]),
                transition=np.array(data["transition"], dtype=np.float64),
                ergodic=bool(data.get("ergodic", False)),
                t_mix=int(data["t_mix"]) if "t_mix" in data else None,
                t_hit=float(data["t_hit"]) if "t_hit" in data else None,
                c0=float(data["c0"]) if "c0" in data else None,
                safe_policy=(
                    np.array(data["safe_policy"], dtype=np.float64)
                    if "safe_policy" in data
                    else None
                ),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed model data: {exc}") from exc


def load_model(path) -> CmdpModel:
    """Load and validate a model from a JSON file."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ParseError(f"cannot read model file {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ParseError(f"model file {path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ParseError(f"model file {path} must contain a JSON object")
    return CmdpModel.from_dict(data)


def save_model(model: CmdpModel, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(model.to_dict(), fh, indent=2)
        fh.write("\n")
