"""Mixing-time and hitting-time estimation for ergodic models.

The defining maxima range over all stationary policies, which is not
exactly computable; we maximize over every deterministic policy plus a
batch of sampled stochastic policies and report the result as a lower
bound, recording the enumeration method.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import NonConvergence, NotErgodic
from .exact import _stationary_of_chain
from .model import CmdpModel, StationaryPolicy

# fixed internal seed: the operation takes no generator but must be deterministic
_SAMPLING_SEED = 0x6D697868
_POWER_CAP = 10**6


@dataclass(frozen=True)
class MixingProfile:
    """Estimated worst-case mixing and hitting times with their provenance."""

    t_mix: int
    t_hit: float
    method: str

    def __post_init__(self):
        if self.t_mix < 1:
            raise ValueError("t_mix must be at least 1")


def chain_mixing_time(p_pi: np.ndarray, mu: np.ndarray, threshold: float = 0.25) -> int:
    """min{t >= 1 : ||(P^pi)^t_{s,.} - mu||_1 <= threshold for all s}."""
    power = np.array(p_pi, dtype=np.float64)
    for t in range(1, _POWER_CAP + 1):
        if np.max(np.abs(power - mu).sum(axis=1)) <= threshold:
            return t
        power = power @ p_pi
    raise NonConvergence(f"chain did not mix within {_POWER_CAP} steps")


def estimate_mixing_time(model: CmdpModel, sample_policies: int = 0) -> MixingProfile:
    """Lower-bound t_mix and t_hit by enumerating policies.

    Covers all A^S deterministic policies and ``sample_policies`` random
    stochastic ones (Dirichlet rows from a fixed internal seed). Raises
    NotErgodic if any enumerated policy induces a non-ergodic chain.
    """
    if not model.ergodic:
        raise NotErgodic("mixing-time estimation requires the ergodicity flag")
    S, A = model.num_states, model.num_actions
    policies = [
        StationaryPolicy.deterministic(np.array(acts), A)
        for acts in itertools.product(range(A), repeat=S)
    ]
    n_det = len(policies)
    if sample_policies > 0:
        rng = np.random.Generator(np.random.Philox(_SAMPLING_SEED))
        for _ in range(sample_policies):
            policies.append(StationaryPolicy(rng.dirichlet(np.ones(A), size=S)))
    t_mix = 1
    t_hit = float(S)
    for policy in policies:
        p_pi = model.policy_transition(policy)
        mu = _stationary_of_chain(p_pi)
        t_mix = max(t_mix, chain_mixing_time(p_pi, mu))
        t_hit = max(t_hit, float(1.0 / mu.min()))
    method = f"enumerated {n_det} deterministic policies + {sample_policies} sampled"
    return MixingProfile(t_mix=t_mix, t_hit=t_hit, method=method)
