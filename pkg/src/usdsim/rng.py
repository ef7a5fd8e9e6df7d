"""Seedable 64-bit PRNG shared by the Python reference path and the kernels.

xoshiro256** with explicit state, so the compiled kernels and this pure
Python class can be driven from the same four-word state and produce
bit-identical streams -- that equivalence is what lets the fast path be
tested against the readable one exactly.

Stream derivation: each trial's state is ``SeedSequence(trial_seed)
.generate_state(4)`` where ``trial_seed = SeedSequence(master_seed,
spawn_key=(trial_id,)).generate_state(1)[0]``.  The trial_seed alone
reproduces the trial and is what run outputs record in their ``seed``
column.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Xoshiro256", "trial_seed", "state_from_seed"]

_MASK = (1 << 64) - 1


def trial_seed(master_seed: int, trial_id: int) -> int:
    """Derive the 64-bit seed of one trial stream from the master seed."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(trial_id,))
    return int(seq.generate_state(1, np.uint64)[0])


def state_from_seed(seed: int) -> np.ndarray:
    """Expand a seed into the four xoshiro256** state words."""
    state = np.random.SeedSequence(seed).generate_state(4, np.uint64)
    if not state.any():  # the all-zero state is invalid for xoshiro
        state[0] = np.uint64(0x9E3779B97F4A7C15)
    return state


def _rotl(x: int, k: int) -> int:
    return ((x << k) | (x >> (64 - k))) & _MASK


class Xoshiro256:
    """Pure-Python xoshiro256**; bit-compatible with the numba kernels."""

    __slots__ = ("s",)

    def __init__(self, state: np.ndarray | list[int] | tuple[int, ...]):
        s = [int(w) & _MASK for w in state]
        if len(s) != 4:
            raise ValueError("state must hold four 64-bit words")
        if not any(s):
            raise ValueError("all-zero state is invalid")
        self.s = s

    @classmethod
    def from_seed(cls, seed: int) -> "Xoshiro256":
        return cls(state_from_seed(seed))

    @classmethod
    def for_trial(cls, master_seed: int, trial_id: int) -> "Xoshiro256":
        return cls.from_seed(trial_seed(master_seed, trial_id))

    def next_u64(self) -> int:
        s = self.s
        result = (_rotl((s[1] * 5) & _MASK, 7) * 9) & _MASK
        t = (s[1] << 17) & _MASK
        s[2] ^= s[0]
        s[3] ^= s[1]
        s[1] ^= s[2]
        s[0] ^= s[3]
        s[2] ^= t
        s[3] = _rotl(s[3], 45)
        return result

    def integers_below(self, bound: int) -> int:
        """Unbiased uniform draw from {0, .., bound-1} by rejection.

        Accepts x >= 2**64 mod bound, the same rule the kernels use, so the
        two paths consume identical numbers of raw words.
        """
        if bound <= 0:
            raise ValueError("bound must be positive")
        threshold = ((1 << 64) - bound) % bound  # == 2**64 mod bound
        while True:
            x = self.next_u64()
            if x >= threshold:
                return x % bound

    def random(self) -> float:
        """Uniform float in [0, 1) with 53 random bits."""
        return (self.next_u64() >> 11) * (2.0**-53)

    def state_array(self) -> np.ndarray:
        return np.array(self.s, dtype=np.uint64)
