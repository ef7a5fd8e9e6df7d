"""Online detection of the five phase boundaries of the process.

The end conditions, evaluated on the current configuration (the leader is
whatever opinion currently has the largest support, lowest index on ties):

  1. u >= (n - x_max)/2            undecided pool has ramped up
  2. exactly one significant opinion (all others trail by alpha*sqrt(n)*log n)
  3. x_max >= 2 * x_i for every other opinion i
  4. x_max >= 2n/3
  5. x_max == n                    consensus

Hitting times are recorded in order: t_m is the first sample time at which
condition m holds after t_1..t_{m-1} have all been recorded, so phases can
collapse onto a single instant but never run backwards.  Conditions only
change at productive interactions, so feeding those (plus t=0) is lossless.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

from .core import ClassificationThresholds, Configuration, bias_summary, potential_z

__all__ = ["PhaseReport", "TraceSample", "phase_predicates", "PhaseTracker"]

NUM_PHASES = 5


@dataclass(frozen=True)
class PhaseReport:
    """Hitting times t1..t5 plus the leader bookkeeping of one run."""

    t1: Optional[int] = None
    t2: Optional[int] = None
    t3: Optional[int] = None
    t4: Optional[int] = None
    t5: Optional[int] = None
    winner: Optional[int] = None
    initial_plurality: Optional[int] = None
    plurality_at_t2: Optional[int] = None
    winner_was_initial_plurality: bool = False

    @property
    def hitting_times(self) -> tuple[Optional[int], ...]:
        return (self.t1, self.t2, self.t3, self.t4, self.t5)

    @property
    def end_conditions_met(self) -> tuple[bool, ...]:
        return tuple(t is not None for t in self.hitting_times)

    def to_dict(self) -> dict:
        return {
            "t1": self.t1,
            "t2": self.t2,
            "t3": self.t3,
            "t4": self.t4,
            "t5": self.t5,
            "winner": self.winner,
            "initial_plurality": self.initial_plurality,
            "plurality_at_t2": self.plurality_at_t2,
            "winner_was_initial_plurality": self.winner_was_initial_plurality,
        }


@dataclass(frozen=True)
class TraceSample:
    """Time-indexed metrics snapshot taken at the trace cadence."""

    t: int
    u: int
    x_max: int
    max_index: int
    z_alpha: float
    additive_bias: int
    multiplicative_bias: float
    significant_count: int

    @classmethod
    def from_configuration(
        cls, c: Configuration, t: int, th: ClassificationThresholds
    ) -> "TraceSample":
        b = bias_summary(c)
        sig = sum(1 for x in c.counts if x > th.significant_cut)
        return cls(
            t=t,
            u=c.undecided,
            x_max=b.max_support,
            max_index=b.max_index,
            z_alpha=float(potential_z(c, th.alpha)),
            additive_bias=b.additive_bias,
            multiplicative_bias=b.multiplicative_bias,
            significant_count=sig,
        )


def phase_predicates(
    c: Configuration, th: ClassificationThresholds
) -> tuple[bool, bool, bool, bool, bool]:
    """Evaluate the five end conditions on one configuration."""
    n = c.n
    x_max = c.x_max
    end1 = 2 * c.undecided >= n - x_max
    if x_max == 0:
        # degenerate all-undecided configuration: no leader to speak of
        return end1, False, False, False, False
    significant = sum(1 for x in c.counts if x > th.significant_cut)
    end2 = significant == 1
    mi = c.max_index
    end3 = all(2 * x <= x_max for i, x in enumerate(c.counts) if i + 1 != mi)
    end4 = 3 * x_max >= 2 * n
    end5 = x_max == n
    return end1, end2, end3, end4, end5


class PhaseTracker:
    """Accumulates a :class:`PhaseReport` from (t, configuration) samples.

    Samples must arrive with strictly increasing t, the first one being the
    initial configuration at t=0 (it seeds the initial-plurality record).
    Once consensus is recorded the report freezes and further updates are
    ignored.
    """

    def __init__(self, alpha: float = 1.0, log_base: float = 2.0):
        self.alpha = alpha
        self.log_base = log_base
        self._last_t = -1
        self._report = PhaseReport()

    @property
    def report(self) -> PhaseReport:
        return self._report

    def update(self, t: int, c: Configuration) -> PhaseReport:
        if t <= self._last_t:
            raise ValueError(f"out-of-order sample t={t} after {self._last_t}")
        self._last_t = t
        rep = self._report
        if rep.t5 is not None:  # frozen
            return rep
        if rep.initial_plurality is None:
            rep = replace(rep, initial_plurality=bias_summary(c).max_index or None)
        th = ClassificationThresholds.for_configuration(c, self.alpha, self.log_base)
        ends = phase_predicates(c, th)
        times = list(rep.hitting_times)
        for m in range(NUM_PHASES):
            if times[m] is not None:
                continue
            if not ends[m]:
                break  # phases 1..4 are recorded strictly in order
            times[m] = t
            if m == 1:
                rep = replace(rep, plurality_at_t2=c.max_index)
        # consensus is an objective absorbing event: record it even when an
        # earlier boundary never fired (possible at tiny n, where the
        # significance margin exceeds n and end2 cannot hold)
        winner = c.consensus_opinion()
        if winner is not None and times[4] is None:
            times[4] = t
        if times[4] is not None:
            rep = replace(
                rep,
                winner=winner,
                winner_was_initial_plurality=(winner == rep.initial_plurality),
            )
        rep = replace(rep, t1=times[0], t2=times[1], t3=times[2],
                      t4=times[3], t5=times[4])
        self._report = rep
        return rep
