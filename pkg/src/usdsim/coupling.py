"""Identity coupling of the k-opinion chain with its 2-opinion projection.

The 2-opinion process starts from (x_1, sum of the rest, u) and both
processes watch the same uniformly random ordered position pair each step,
reading agent types off canonical layout vectors rebuilt from the counts
after every step.  Under this coupling the leader's support in the
k-process dominates the 2-process leader surely:

    x_1(t) >= x~_1(t)   and   x_1(t) + u(t) >= x~_1(t) + u~(t)

so a single observed violation falsifies the implementation, not the run.

The layout places agents in segments: the common leader block, the common
undecided block, the blocks of opinions 2..k (all reading 2 in the
projection), and then a case split on whether the projection currently has
more undecided agents than the k-process (extra positions pair leader
agents with undecided/2 agents) or fewer (extra undecided k-agents pair
with 2s).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .core import UNDECIDED, Configuration, apply_interaction
from .rng import Xoshiro256

__all__ = [
    "CoupledState",
    "CoupledRunResult",
    "init_coupled",
    "canonical_vectors",
    "coupled_step",
    "run_coupled",
]


@dataclass(frozen=True)
class CoupledState:
    """Paired configurations plus their canonical agent vectors."""

    k_config: Configuration
    two_config: Configuration
    v: np.ndarray
    v_tilde: np.ndarray
    t: int

    def invariant_holds(self) -> bool:
        x1 = self.k_config.count(1)
        u = self.k_config.undecided
        tw1 = self.two_config.count(1)
        tu = self.two_config.undecided
        return x1 >= tw1 and x1 + u >= tw1 + tu


def canonical_vectors(
    k_config: Configuration, two_config: Configuration
) -> tuple[np.ndarray, np.ndarray]:
    """Materialize the layout vectors (v, v~) for the current counts."""
    n = k_config.n
    x1, u = k_config.count(1), k_config.undecided
    tw1, tu = two_config.count(1), two_config.undecided
    if not (x1 >= tw1 and x1 + u >= tw1 + tu):
        raise ValueError("majorization invariant violated; no layout exists")
    v = np.empty(n, dtype=np.int64)
    vt = np.empty(n, dtype=np.int64)
    pos = 0

    def fill(length: int, vv: int, tv: int) -> None:
        nonlocal pos
        v[pos : pos + length] = vv
        vt[pos : pos + length] = tv
        pos += length

    fill(tw1, 1, 1)
    fill(min(u, tu), UNDECIDED, UNDECIDED)
    for j in range(2, k_config.k + 1):
        fill(k_config.count(j), j, 2)
    if tu >= u:
        fill(tu - u, 1, UNDECIDED)
        fill(x1 + u - tw1 - tu, 1, 2)
    else:
        fill(x1 - tw1, 1, 2)
        fill(u - tu, UNDECIDED, 2)
    assert pos == n
    return v, vt


def init_coupled(c: Configuration) -> CoupledState:
    """Project ``c`` onto two opinions and build the canonical layout.

    The strict plurality opinion is relabeled to index 1 (the remaining
    opinions keep their relative order); the projection merges everything
    else into opinion 2.
    """
    x_max = c.x_max
    if x_max == 0 or sum(1 for x in c.counts if x == x_max) != 1:
        raise ValueError("initial configuration needs a strict plurality opinion")
    mi = c.max_index
    counts = (x_max,) + tuple(x for i, x in enumerate(c.counts) if i + 1 != mi)
    k_config = Configuration(counts, c.undecided)
    two_config = Configuration((x_max, c.decided - x_max), c.undecided)
    v, vt = canonical_vectors(k_config, two_config)
    return CoupledState(k_config, two_config, v, vt, 0)


def _shift(c: Configuration, before: int, after: int) -> Configuration:
    counts = list(c.counts)
    u = c.undecided
    if before == UNDECIDED:
        u -= 1
    else:
        counts[before - 1] -= 1
    if after == UNDECIDED:
        u += 1
    else:
        counts[after - 1] += 1
    return Configuration(tuple(counts), u)


def coupled_step(s: CoupledState, rng: Xoshiro256) -> CoupledState:
    """Advance both processes by one identity-coupled interaction."""
    n = s.k_config.n
    i = rng.integers_below(n)
    j = rng.integers_below(n)
    vi, vj = int(s.v[i]), int(s.v[j])
    tvi, tvj = int(s.v_tilde[i]), int(s.v_tilde[j])
    new_vi = apply_interaction(vi, vj)
    new_tvi = apply_interaction(tvi, tvj)
    k_config = s.k_config if new_vi == vi else _shift(s.k_config, vi, new_vi)
    two_config = s.two_config if new_tvi == tvi else _shift(s.two_config, tvi, new_tvi)
    if new_vi == vi and new_tvi == tvi:
        return CoupledState(k_config, two_config, s.v, s.v_tilde, s.t + 1)
    v, vt = canonical_vectors(k_config, two_config)
    return CoupledState(k_config, two_config, v, vt, s.t + 1)


@dataclass(frozen=True)
class CoupledRunResult:
    held: bool
    first_violation: Optional[int]
    t_consensus_k: Optional[int]
    t_consensus_2: Optional[int]
    interactions: int
    final_k: Configuration
    final_two: Configuration

    def to_dict(self) -> dict:
        return {
            "held": self.held,
            "first_violation": self.first_violation,
            "t_consensus_k": self.t_consensus_k,
            "t_consensus_2": self.t_consensus_2,
            "interactions": self.interactions,
        }


def run_coupled(c: Configuration, cap: int, rng: Xoshiro256) -> CoupledRunResult:
    """Step the coupled pair until both processes absorb or the cap.

    ``cap=0`` returns immediately with the invariant trivially held.  The
    hot loop runs compiled; the rng state is advanced in place so the caller
    can keep drawing from it.
    """
    if cap < 0:
        raise ValueError("cap must be non-negative")
    start = init_coupled(c)
    counts0 = np.array(start.k_config.counts, dtype=np.int64)
    state = rng.state_array()
    held, viol, tck, tc2, t, counts, u, tw1, tw2, tu = _kernels.run_coupled(
        counts0, start.k_config.undecided, cap, state
    )
    rng.s = [int(w) for w in state]
    return CoupledRunResult(
        held=bool(held),
        first_violation=None if viol < 0 else int(viol),
        t_consensus_k=None if tck < 0 else int(tck),
        t_consensus_2=None if tc2 < 0 else int(tc2),
        interactions=int(t),
        final_k=Configuration(tuple(int(x) for x in counts), int(u)),
        final_two=Configuration((int(tw1), int(tw2)), int(tu)),
    )
