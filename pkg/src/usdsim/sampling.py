"""Cumulative-weight sampler over integer category counts.

A Fenwick (binary indexed) tree keeps prefix sums of the k+1 type counts so
a categorical draw is an inverse-CDF descent and a count update is a point
increment, both O(log k).  Weights are integers throughout, which keeps the
induced distribution exactly count/total.
"""

from __future__ import annotations

from collections.abc import Sequence

__all__ = ["FenwickSampler"]


class FenwickSampler:
    """Weighted categorical sampler with O(log k) update and draw."""

    def __init__(self, weights: Sequence[int]):
        if any(w < 0 for w in weights):
            raise ValueError("weights must be non-negative")
        self._size = len(weights)
        self._tree = [0] * (self._size + 1)
        self._total = 0
        for i, w in enumerate(weights):
            if w:
                self.update(i, w)

    def __len__(self) -> int:
        return self._size

    @property
    def total(self) -> int:
        return self._total

    def update(self, index: int, delta: int) -> None:
        """Add ``delta`` to the weight of category ``index``."""
        self._total += delta
        j = index + 1
        while j <= self._size:
            self._tree[j] += delta
            j += j & (-j)

    def weight(self, index: int) -> int:
        j = index + 1
        v = self._tree[j]
        p = j & (j - 1)
        j -= 1
        while j != p:
            v -= self._tree[j]
            j &= j - 1
        return v

    def find(self, r: int) -> int:
        """Smallest index whose cumulative weight exceeds ``r`` (0 <= r < total)."""
        if not 0 <= r < self._total:
            raise ValueError(f"r={r} outside [0, {self._total})")
        idx = 0
        half = 1
        while half * 2 <= self._size:
            half *= 2
        while half > 0:
            nxt = idx + half
            if nxt <= self._size and self._tree[nxt] <= r:
                idx = nxt
                r -= self._tree[nxt]
            half //= 2
        return idx  # 0-based category

    def sample(self, rng) -> int:
        """Draw a category with probability weight/total."""
        if self._total <= 0:
            raise ValueError("cannot sample from zero total weight")
        return self.find(rng.integers_below(self._total))
