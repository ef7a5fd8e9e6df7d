"""Sequential interaction sampling for the undecided-state process.

This is the readable reference path: one uniformly random ordered
(responder, initiator) pair per step, sampled at the type level -- the
responder type and the initiator type are independent draws with
probability count/n each, which induces exactly the uniform ordered
agent-pair chain because same-agent pairs are always unproductive.

Two stepping modes share one law: ``exact`` samples every interaction,
``skip`` samples the geometric count of unproductive interactions and then
the productive event from its exact conditional distribution.  The compiled
fast path in :mod:`usdsim._kernels` consumes the same PRNG stream in the
same order, so both paths produce bit-identical runs from one seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Callable, Optional

from .core import UNDECIDED, Configuration, apply_interaction
from .rng import Xoshiro256
from .sampling import FenwickSampler

__all__ = [
    "InteractionEvent",
    "RunResult",
    "StopReason",
    "sample_step",
    "productive_weights",
    "productive_distribution",
    "sample_productive_step",
    "run_until",
]


@dataclass(frozen=True)
class InteractionEvent:
    """One sampled ordered interaction: types, productivity, and its index."""

    responder_type: int
    initiator_type: int
    productive: bool
    t: int


class StopReason(Enum):
    CONSENSUS = "consensus"
    CAP = "cap"
    PREDICATE = "predicate"


@dataclass(frozen=True)
class RunResult:
    final: Configuration
    interactions: int
    consensus_opinion: Optional[int]
    stop_reason: StopReason


def _type_sampler(c: Configuration) -> FenwickSampler:
    # category 0 is the undecided type, 1..k the opinions
    return FenwickSampler([c.undecided, *c.counts])


def sample_step(
    c: Configuration, rng: Xoshiro256, t: int = 0
) -> tuple[Configuration, InteractionEvent]:
    """Sample one interaction and apply it; returns the event for auditing.

    Draw order is fixed (responder type first) so runs are reproducible
    from the seed alone.
    """
    sampler = _type_sampler(c)
    responder = sampler.find(rng.integers_below(c.n))
    initiator = sampler.find(rng.integers_below(c.n))
    after = apply_interaction(responder, initiator)
    event = InteractionEvent(responder, initiator, after != responder, t)
    if after == responder:
        return c, event
    counts = list(c.counts)
    u = c.undecided
    if responder == UNDECIDED:
        u -= 1
    else:
        counts[responder - 1] -= 1
    if after == UNDECIDED:
        u += 1
    else:
        counts[after - 1] += 1
    return Configuration(tuple(counts), u), event


def productive_weights(c: Configuration) -> list[tuple[int, int, int]]:
    """Integer weights (over n^2) of all productive events, in draw order.

    Entries are ``(delta_u, opinion, weight)``: first the k adoption events
    (an undecided responder adopts opinion i, weight u*x_i), then the k
    abandonment events (an opinion-i responder goes undecided, weight
    x_i*(n-u-x_i)).  The fast path scans this exact order.
    """
    n, u = c.n, c.undecided
    events = [(-1, i + 1, u * x) for i, x in enumerate(c.counts)]
    events += [(+1, i + 1, x * (n - u - x)) for i, x in enumerate(c.counts)]
    return events


def productive_distribution(c: Configuration) -> dict[Configuration, Fraction]:
    """Exact conditional law of the next productive successor.

    This is the distribution :func:`sample_productive_step` draws from; the
    oracle recomputes it independently from the one-step law.
    """
    events = productive_weights(c)
    total = sum(w for _, _, w in events)
    if total == 0:
        raise ValueError("configuration is absorbing")
    dist: dict[Configuration, Fraction] = {}
    for delta_u, i, w in events:
        if w == 0:
            continue
        succ = c.replace(i, -delta_u, delta_u)
        dist[succ] = dist.get(succ, Fraction(0)) + Fraction(w, total)
    return dist


def _geometric_skips(rng: Xoshiro256, p_prod: float) -> int:
    """Number of unproductive interactions before the next productive one.

    Inverse-CDF transform of the geometric law; the kernel evaluates the
    same expression so streams stay aligned.
    """
    urand = 1.0 - rng.random()  # (0, 1]
    if p_prod >= 1.0:
        return 0
    return int(math.log(urand) / math.log1p(-p_prod))


def sample_productive_step(
    c: Configuration, rng: Xoshiro256
) -> tuple[Configuration, int]:
    """Jump to the next productive interaction; returns skipped count.

    The joint law of (successor sequence, total interaction count) matches
    iterating :func:`sample_step`: skips are geometric with the exact
    productive probability and the productive event is drawn from integer
    weights over n^2.
    """
    events = productive_weights(c)
    w_prod = sum(w for _, _, w in events)
    if w_prod == 0:
        raise ValueError("configuration is absorbing")
    n = c.n
    skipped = _geometric_skips(rng, float(w_prod) / float(n * n))
    r = rng.integers_below(w_prod)
    acc = 0
    for delta_u, i, w in events:
        acc += w
        if r < acc:
            return c.replace(i, -delta_u, delta_u), skipped
    raise AssertionError("weight scan fell through")


def run_until(
    c: Configuration,
    stop: Callable[[Configuration, int], bool],
    cap: int,
    rng: Xoshiro256,
    recorder: Optional[Callable[[Configuration, int], None]] = None,
    mode: str = "exact",
    sample_every: Optional[int] = None,
) -> RunResult:
    """Iterate interactions until the predicate, consensus, or the cap.

    ``recorder`` receives (configuration, t) at t=0 and then whenever t
    crosses a multiple of ``sample_every``; skipped interactions advance t
    without a state change, so skip-mode traces agree with exact-mode ones.
    """
    if cap <= 0:
        raise ValueError("cap must be positive")
    if mode not in ("exact", "skip"):
        raise ValueError(f"unknown mode {mode!r}")
    t = 0
    next_sample = None
    if recorder is not None:
        if sample_every is None or sample_every <= 0:
            raise ValueError("recorder needs a positive sample_every")
        recorder(c, 0)
        next_sample = sample_every

    def emit_until(limit_t: int, config: Configuration) -> None:
        nonlocal next_sample
        while next_sample is not None and next_sample <= limit_t:
            recorder(config, next_sample)
            next_sample += sample_every

    while True:
        if stop(c, t):
            reason = StopReason.PREDICATE
            break
        if c.consensus_opinion() is not None:
            reason = StopReason.CONSENSUS
            break
        if t >= cap:
            reason = StopReason.CAP
            break
        if mode == "exact":
            c, _ = sample_step(c, rng, t)
            t += 1
            emit_until(t, c)
        else:
            if c.is_absorbing():
                # all-undecided trap: nothing can ever change, burn the cap
                emit_until(cap, c)
                t = cap
                continue
            prev = c
            c, skipped = sample_productive_step(c, rng)
            t_next = t + skipped + 1
            if t_next > cap:
                emit_until(cap, prev)
                c, t = prev, cap
                continue
            emit_until(t_next - 1, prev)
            t = t_next
            emit_until(t, c)
    return RunResult(c, t, c.consensus_opinion(), reason)
