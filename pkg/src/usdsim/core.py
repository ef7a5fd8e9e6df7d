"""Domain types and closed-form quantities of the undecided-state dynamics.

Agent states are plain ints: ``0`` is the undecided state (the constant
``UNDECIDED``), ``1..k`` are opinion indices.  A population is summarized by
its :class:`Configuration` (per-opinion support counts plus the undecided
count); since agents are anonymous, the configuration fully determines the
law of the interaction chain.

All transition probabilities are computed as exact rationals over n**2 so
they can be compared against brute-force enumeration without floating-point
slack.  Float mirrors are provided for logging and plotting.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

__all__ = [
    "UNDECIDED",
    "Configuration",
    "BiasSummary",
    "TransitionProbs",
    "OpinionProbs",
    "PairDiffProbs",
    "ClassificationThresholds",
    "OpinionLabels",
    "BoundComparison",
    "apply_interaction",
    "transition_probs",
    "opinion_probs",
    "pair_diff_probs",
    "u_star",
    "potential_z",
    "bias_summary",
    "classify_opinions",
    "monochromatic_distance",
    "monochromatic_distance_exact",
    "crossover_predicate",
    "bound_comparison",
]

UNDECIDED = 0


def apply_interaction(responder: int, initiator: int) -> int:
    """Return the responder's next state after meeting ``initiator``.

    Only the responder changes: two distinct opinions leave it undecided, an
    undecided responder adopts a decided initiator's opinion, and every other
    pairing (same opinion, undecided initiator, both undecided) is a no-op.
    """
    if responder != UNDECIDED and initiator != UNDECIDED and responder != initiator:
        return UNDECIDED
    if responder == UNDECIDED and initiator != UNDECIDED:
        return initiator
    return responder


@dataclass(frozen=True)
class Configuration:
    """Counts ``(x_1, .., x_k)`` plus the undecided count ``u``.

    ``n`` and ``k`` are derived, so the conservation invariant
    ``sum(counts) + undecided == n`` holds by construction; negative entries
    are rejected at creation time.
    """

    counts: tuple[int, ...]
    undecided: int

    def __post_init__(self) -> None:
        if len(self.counts) < 1:
            raise ValueError("need at least one opinion slot")
        if any(x < 0 for x in self.counts) or self.undecided < 0:
            raise ValueError(f"negative count in {self.counts} / u={self.undecided}")
        object.__setattr__(self, "counts", tuple(int(x) for x in self.counts))
        object.__setattr__(self, "undecided", int(self.undecided))

    @property
    def n(self) -> int:
        return sum(self.counts) + self.undecided

    @property
    def k(self) -> int:
        return len(self.counts)

    @property
    def decided(self) -> int:
        return sum(self.counts)

    @property
    def x_max(self) -> int:
        return max(self.counts)

    @property
    def max_index(self) -> int:
        """1-based index of the largest opinion; ties break to the lowest index."""
        return self.counts.index(self.x_max) + 1

    def count(self, i: int) -> int:
        """Support of opinion ``i`` (1-based)."""
        return self.counts[i - 1]

    def consensus_opinion(self) -> int | None:
        """The opinion all agents share, or None if no consensus yet."""
        for i, x in enumerate(self.counts):
            if x == self.n:
                return i + 1
        return None

    def is_absorbing(self) -> bool:
        """True when no interaction can change the configuration."""
        return self.consensus_opinion() is not None or self.undecided == self.n

    def replace(self, i: int, delta_x: int, delta_u: int) -> "Configuration":
        """New configuration with opinion ``i`` and ``u`` shifted."""
        counts = list(self.counts)
        counts[i - 1] += delta_x
        return Configuration(tuple(counts), self.undecided + delta_u)


@dataclass(frozen=True)
class TransitionProbs:
    """One-interaction law of the undecided count: u-1, u+1, and conditional.

    ``p_tilde_plus`` is the probability that u grows conditioned on the
    interaction being productive; it is None for absorbing configurations
    where no productive interaction exists.
    """

    p_minus: Fraction
    p_plus: Fraction
    p_tilde_plus: Fraction | None
    r_squared: int

    @property
    def p_productive(self) -> Fraction:
        return self.p_minus + self.p_plus

    @property
    def floats(self) -> tuple[float, float, float | None]:
        pt = None if self.p_tilde_plus is None else float(self.p_tilde_plus)
        return float(self.p_minus), float(self.p_plus), pt


def transition_probs(c: Configuration) -> TransitionProbs:
    """Exact p_-, p_+, and conditional p~_+ for one uniform interaction.

    p_- = u(n-u)/n^2 (an undecided responder adopts some opinion) and
    p_+ = ((n-u)^2 - sum_i x_i^2)/n^2 (a decided responder meets a different
    decided opinion and goes undecided).
    """
    n = c.n
    if n == 0:
        raise ValueError("empty population has no interaction law")
    u = c.undecided
    nn = n * n
    r2 = sum(x * x for x in c.counts)
    p_minus = Fraction(u * (n - u), nn)
    p_plus = Fraction((n - u) * (n - u) - r2, nn)
    total = p_minus + p_plus
    p_tilde = p_plus / total if total > 0 else None
    return TransitionProbs(p_minus, p_plus, p_tilde, r2)


@dataclass(frozen=True)
class OpinionProbs:
    """One-interaction law of a single opinion's support."""

    p_plus: Fraction
    p_minus: Fraction
    p_tilde_plus: Fraction | None


def opinion_probs(c: Configuration, i: int) -> OpinionProbs:
    """Exact growth/shrink probabilities for opinion ``i`` in one interaction.

    Growth needs an undecided responder meeting an i-initiator (u*x_i/n^2);
    shrinkage needs an i-responder meeting a different decided initiator
    (x_i*(n-u-x_i)/n^2).
    """
    if not 1 <= i <= c.k:
        raise ValueError(f"opinion index {i} out of range 1..{c.k}")
    n, u, xi = c.n, c.undecided, c.count(i)
    nn = n * n
    p_plus = Fraction(u * xi, nn)
    p_minus = Fraction(xi * (n - u - xi), nn)
    total = p_plus + p_minus
    p_tilde = p_plus / total if total > 0 else None
    return OpinionProbs(p_plus, p_minus, p_tilde)


@dataclass(frozen=True)
class PairDiffProbs:
    """One-interaction law of the support difference x_i - x_j."""

    p_plus: Fraction
    p_minus: Fraction
    p_tilde_plus: Fraction | None


def pair_diff_probs(c: Configuration, i: int, j: int) -> PairDiffProbs:
    """Exact probabilities that x_i - x_j moves +1 / -1 in one interaction.

    The difference grows when opinion i gains or opinion j loses; the two
    events are disjoint, so the probabilities add.
    """
    if i == j:
        raise ValueError("need two distinct opinions")
    pi = opinion_probs(c, i)
    pj = opinion_probs(c, j)
    p_plus = pi.p_plus + pj.p_minus
    p_minus = pi.p_minus + pj.p_plus
    total = p_plus + p_minus
    p_tilde = p_plus / total if total > 0 else None
    return PairDiffProbs(p_plus, p_minus, p_tilde)


def u_star(n: int, k: int) -> Fraction:
    """Unstable equilibrium n(k-1)/(2k-1) of the undecided count.

    Above it, productive interactions shrink u in expectation; below it they
    grow u.
    """
    if k < 2:
        raise ValueError("need at least two opinions")
    return Fraction(n * (k - 1), 2 * k - 1)


def potential_z(c: Configuration, alpha: float | Fraction = 1):
    """Potential n - 2u - alpha * x_max.

    alpha=1 drives the undecided ramp-up argument (the phase ends once the
    potential drops to 0, i.e. u >= (n - x_max)/2); alpha=7/8 is the variant
    used once the leader holds a multiplicative bias.  Passing a Fraction
    keeps the result exact.
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return c.n - 2 * c.undecided - alpha * c.x_max


@dataclass(frozen=True)
class BiasSummary:
    """Leader identity and its additive/multiplicative margins.

    ``multiplicative_bias`` is inf when no second opinion has support;
    ``degenerate`` marks the all-undecided case where no leader exists.
    """

    max_index: int
    max_support: int
    additive_bias: int
    multiplicative_bias: float
    multiplicative_bias_exact: Fraction | None
    degenerate: bool = False


def bias_summary(c: Configuration) -> BiasSummary:
    """Summarize the configuration's bias; ties pick the lowest opinion index."""
    x_max = c.x_max
    if x_max == 0:
        return BiasSummary(0, 0, 0, math.nan, None, degenerate=True)
    idx = c.max_index
    second = max((x for i, x in enumerate(c.counts) if i + 1 != idx), default=0)
    additive = x_max - second
    if second == 0:
        return BiasSummary(idx, x_max, additive, math.inf, None)
    ratio = Fraction(x_max, second)
    return BiasSummary(idx, x_max, additive, float(ratio), ratio)


@dataclass(frozen=True)
class ClassificationThresholds:
    """Support cutoffs for the significant / important / small labels.

    significant_cut = x_max - alpha*sqrt(n)*log(n)
    important_cut   = x_max - 4*alpha*sqrt(n)*log(n)
    small_cut       = 20*sqrt(n*log(n))

    The log base is configurable (default 2); the significance constant
    alpha absorbs the base anyway, so only the pairing matters.
    """

    alpha: float
    significant_cut: float
    important_cut: float
    small_cut: float

    def __post_init__(self) -> None:
        if not self.important_cut <= self.significant_cut:
            raise ValueError("important_cut must not exceed significant_cut")

    @classmethod
    def for_configuration(
        cls, c: Configuration, alpha: float = 1.0, log_base: float = 2.0
    ) -> "ClassificationThresholds":
        if alpha <= 0:
            raise ValueError("alpha must be positive")
        n = c.n
        log_n = math.log(n, log_base) if n > 1 else 0.0
        margin = alpha * math.sqrt(n) * log_n
        return cls(
            alpha=alpha,
            significant_cut=c.x_max - margin,
            important_cut=c.x_max - 4.0 * margin,
            small_cut=20.0 * math.sqrt(n * log_n),
        )


@dataclass(frozen=True)
class OpinionLabels:
    significant: bool
    important: bool
    small: bool


def classify_opinions(
    c: Configuration, th: ClassificationThresholds
) -> tuple[OpinionLabels, ...]:
    """Label every opinion against the three support cutoffs.

    significant and important use strict '>' (an opinion exactly on the cut
    is out); small uses '<=' per its definition.  significant implies
    important because the important cut sits 4x further below x_max.
    """
    return tuple(
        OpinionLabels(
            significant=x > th.significant_cut,
            important=x > th.important_cut,
            small=x <= th.small_cut,
        )
        for x in c.counts
    )


def monochromatic_distance(c: Configuration) -> float:
    """sum_i (x_i / x_max)^2, the gossip-model uniformity measure in [1, k].

    NaN flags the degenerate all-undecided configuration.
    """
    x_max = c.x_max
    if x_max == 0:
        return math.nan
    return sum((x / x_max) ** 2 for x in c.counts)


def monochromatic_distance_exact(c: Configuration) -> Fraction | None:
    x_max = c.x_max
    if x_max == 0:
        return None
    return Fraction(sum(x * x for x in c.counts), x_max * x_max)


def _exact_integer_log(n: int, base: float) -> int | None:
    """log_base(n) when it is an exact non-negative integer, else None."""
    if n < 1 or base <= 1 or int(base) != base:
        return None
    b = int(base)
    m, power = 0, 1
    while power < n:
        power *= b
        m += 1
    return m if power == n else None


def crossover_predicate(c: Configuration, log_base: float = 2.0) -> bool:
    """True iff x_max > n*log(n)/k, the regime where the gossip-model bound wins.

    When log_base(n) is an exact integer the comparison is pure integer
    arithmetic; otherwise it falls back to floats.
    """
    n, k, x_max = c.n, c.k, c.x_max
    m = _exact_integer_log(n, log_base)
    if m is not None:
        return k * x_max > n * m
    return k * x_max > n * math.log(n, log_base)


@dataclass(frozen=True)
class BoundComparison:
    """Parallel-time convergence bounds of the two models, side by side.

    ``gossip_bound`` is md(x)*log n, the synchronous gossip-model rate;
    ``population_bound`` is log n + n/x_max, the sequential-model rate
    divided by n.  ``crossover`` is the closed-form
    predicate x_max > n*log(n)/k marking where the gossip bound wins
    asymptotically.
    """

    md: float
    gossip_bound: float
    population_bound: float
    verdict: str  # "gossip_better" | "population_better" | "tie"
    crossover: bool


def bound_comparison(c: Configuration, log_base: float = 2.0) -> BoundComparison:
    """Compare md(x)*log n against log n + n/x_max and report the crossover."""
    if c.x_max == 0:
        raise ValueError("bound comparison needs a decided agent")
    n = c.n
    log_n = math.log(n, log_base) if n > 1 else 0.0
    md = monochromatic_distance(c)
    gossip = md * log_n
    population = log_n + n / c.x_max
    if gossip < population:
        verdict = "gossip_better"
    elif gossip > population:
        verdict = "population_better"
    else:
        verdict = "tie"
    return BoundComparison(
        md=md,
        gossip_bound=gossip,
        population_bound=population,
        verdict=verdict,
        crossover=crossover_predicate(c, log_base),
    )
