"""Brute-force ground truth on small instances.

Everything here is deliberately independent of the closed forms in
:mod:`usdsim.core`: one-step laws come from enumerating ordered agent (or
type) pairs and replaying the transition rule, and absorption statistics
come from first-step linear systems over the fully enumerated chain.  Exact
rationals are used wherever feasible so equality checks need no tolerance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .core import (
    UNDECIDED,
    Configuration,
    apply_interaction,
    opinion_probs,
    pair_diff_probs,
    transition_probs,
)

__all__ = [
    "ConfigIndex",
    "AbsorptionStats",
    "ClosedFormMismatch",
    "ClosedFormReport",
    "enumerate_configs",
    "agent_pair_distribution",
    "one_step_distribution",
    "productive_conditional_distribution",
    "solve_absorption",
    "absorption_stats",
    "verify_closed_forms",
]

DEFAULT_ENUM_LIMIT = 2_000_000


def _num_configs(n: int, k: int) -> int:
    # compositions of n into k+1 non-negative parts
    return math.comb(n + k, k)


def enumerate_configs(n: int, k: int, limit: int = DEFAULT_ENUM_LIMIT) -> list[Configuration]:
    """All configurations of n agents over k opinions, in index order."""
    total = _num_configs(n, k)
    if total > limit:
        raise ValueError(f"{total} configurations exceed the limit {limit}")
    out: list[Configuration] = []
    counts = [0] * k

    def rec(d: int, remaining: int) -> None:
        if d == k:
            out.append(Configuration(tuple(counts), remaining))
            return
        for v in range(remaining + 1):
            counts[d] = v
            rec(d + 1, remaining - v)
        counts[d] = 0

    rec(0, n)
    return out


class ConfigIndex:
    """Dense bijection between configurations of (n, k) and 0..C(n+k,k)-1.

    The order is lexicographic in (x_1, .., x_k) ascending, matching
    :func:`enumerate_configs`; the undecided count is implied.
    """

    def __init__(self, n: int, k: int):
        self.n = n
        self.k = k
        self.size = _num_configs(n, k)

    def __len__(self) -> int:
        return self.size

    def index_of(self, c: Configuration) -> int:
        if c.n != self.n or c.k != self.k:
            raise ValueError("configuration does not match this index")
        rank = 0
        remaining = self.n
        for d, x in enumerate(c.counts):
            dims_left = self.k - d - 1
            # ways to complete with a smaller value in this slot
            for v in range(x):
                rank += math.comb(remaining - v + dims_left, dims_left)
            remaining -= x
        return rank

    def config_at(self, index: int) -> Configuration:
        if not 0 <= index < self.size:
            raise IndexError(index)
        counts = []
        remaining = self.n
        for d in range(self.k):
            dims_left = self.k - d - 1
            v = 0
            while True:
                block = math.comb(remaining - v + dims_left, dims_left)
                if index < block:
                    break
                index -= block
                v += 1
            counts.append(v)
            remaining -= v
        return Configuration(tuple(counts), remaining)


def _apply_to_config(c: Configuration, responder: int, initiator: int) -> Configuration:
    """Successor configuration after a (responder, initiator) type meeting."""
    after = apply_interaction(responder, initiator)
    if after == responder:
        return c
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
    return Configuration(tuple(counts), u)


def agent_pair_distribution(c: Configuration) -> dict[Configuration, Fraction]:
    """One-step law by enumerating all n^2 ordered agent pairs.

    Builds the literal agent list and classifies every ordered (responder,
    initiator) pair, self-pairs included.  This is the most primitive oracle
    and is only meant for tiny n.
    """
    n = c.n
    if n == 0:
        raise ValueError("empty population")
    if n > 64:
        raise ValueError("agent-pair enumeration is quadratic; keep n <= 64")
    agents: list[int] = []
    for i, x in enumerate(c.counts):
        agents.extend([i + 1] * x)
    agents.extend([UNDECIDED] * c.undecided)
    dist: dict[Configuration, Fraction] = {}
    unit = Fraction(1, n * n)
    for a in agents:
        for b in agents:
            succ = _apply_to_config(c, a, b)
            dist[succ] = dist.get(succ, Fraction(0)) + unit
    return dist


def one_step_distribution(c: Configuration) -> dict[Configuration, Fraction]:
    """One-step law from the (k+1)^2 ordered type pairs, exact rationals."""
    n = c.n
    if n == 0:
        raise ValueError("empty population")
    nn = n * n
    type_counts = [(UNDECIDED, c.undecided)] + [
        (i + 1, x) for i, x in enumerate(c.counts)
    ]
    dist: dict[Configuration, Fraction] = {}
    for a, ca in type_counts:
        if ca == 0:
            continue
        for b, cb in type_counts:
            if cb == 0:
                continue
            succ = _apply_to_config(c, a, b)
            dist[succ] = dist.get(succ, Fraction(0)) + Fraction(ca * cb, nn)
    return dist


def productive_conditional_distribution(
    c: Configuration,
) -> dict[Configuration, Fraction]:
    """Law of the next *different* configuration, conditioned on change."""
    dist = one_step_distribution(c)
    moving = {s: p for s, p in dist.items() if s != c}
    total = sum(moving.values(), Fraction(0))
    if total == 0:
        raise ValueError("configuration is absorbing")
    return {s: p / total for s, p in moving.items()}


@dataclass(frozen=True)
class AbsorptionStats:
    """Absorption probabilities and expected consensus time from one start."""

    start: Configuration
    win_prob: tuple
    expected_time: object  # Fraction in exact mode, float otherwise
    exact: bool
    degenerate: bool = False  # start absorbing without consensus


class SingularChainError(RuntimeError):
    """Raised when some transient state cannot reach absorption."""


@dataclass
class _AbsorptionSolve:
    index: ConfigIndex
    transient_ids: dict[int, int]
    win: object  # list of rows (exact) or ndarray
    times: object
    exact: bool


def _exact_solve(rows: list[dict[int, Fraction]], rhs: list[list[Fraction]]):
    """Gaussian elimination over Fractions; rows[i] maps column -> coeff."""
    m = len(rows)
    width = len(rhs[0])
    a = [[Fraction(0)] * m for _ in range(m)]
    for i, row in enumerate(rows):
        for j, v in row.items():
            a[i][j] = v
    b = [list(r) for r in rhs]
    for col in range(m):
        piv = next((r for r in range(col, m) if a[r][col] != 0), None)
        if piv is None:
            raise SingularChainError(f"zero pivot at column {col}")
        if piv != col:
            a[col], a[piv] = a[piv], a[col]
            b[col], b[piv] = b[piv], b[col]
        inv = 1 / a[col][col]
        a[col] = [v * inv for v in a[col]]
        b[col] = [v * inv for v in b[col]]
        for r in range(m):
            if r != col and a[r][col] != 0:
                f = a[r][col]
                a[r] = [vr - f * vc for vr, vc in zip(a[r], a[col])]
                b[r] = [vr - f * vc for vr, vc in zip(b[r], b[col])]
    return b


def solve_absorption(n: int, k: int, exact_limit: int = 200,
                     limit: int = DEFAULT_ENUM_LIMIT) -> _AbsorptionSolve:
    """Solve win probabilities and expected times for every transient state.

    Exact rational elimination up to ``exact_limit`` transient states, then
    sparse float LU with an infinity-norm residual check of 1e-10.
    """
    idx = ConfigIndex(n, k)
    configs = enumerate_configs(n, k, limit=limit)
    transient_ids: dict[int, int] = {}
    for c in configs:
        if not c.is_absorbing():
            transient_ids[idx.index_of(c)] = len(transient_ids)
    m = len(transient_ids)
    exact = m <= exact_limit

    # consensus targets: column i-1 of the win matrix is absorption on opinion i
    if exact:
        rows: list[dict[int, Fraction]] = [dict() for _ in range(m)]
        rhs: list[list[Fraction]] = [[Fraction(0)] * (k + 1) for _ in range(m)]
        for c in configs:
            gi = idx.index_of(c)
            if gi not in transient_ids:
                continue
            r = transient_ids[gi]
            rows[r][r] = Fraction(1)
            rhs[r][k] = Fraction(1)  # expected-time RHS
            for succ, p in one_step_distribution(c).items():
                si = idx.index_of(succ)
                if si in transient_ids:
                    sr = transient_ids[si]
                    rows[r][sr] = rows[r].get(sr, Fraction(0)) - p
                else:
                    win = succ.consensus_opinion()
                    if win is not None:
                        rhs[r][win - 1] += p
        sol = _exact_solve(rows, rhs)
        win = [row[:k] for row in sol]
        times = [row[k] for row in sol]
        return _AbsorptionSolve(idx, transient_ids, win, times, True)

    from scipy.sparse import lil_matrix
    from scipy.sparse.linalg import splu

    a = lil_matrix((m, m))
    rhs_f = np.zeros((m, k + 1))
    for c in configs:
        gi = idx.index_of(c)
        if gi not in transient_ids:
            continue
        r = transient_ids[gi]
        a[r, r] = 1.0
        rhs_f[r, k] = 1.0
        for succ, p in one_step_distribution(c).items():
            si = idx.index_of(succ)
            if si in transient_ids:
                a[r, transient_ids[si]] -= float(p)
            else:
                win = succ.consensus_opinion()
                if win is not None:
                    rhs_f[r, win - 1] += float(p)
    lu = splu(a.tocsc())
    sol = lu.solve(rhs_f)
    residual = np.abs(a @ sol - rhs_f).max()
    if not np.isfinite(sol).all() or residual > 1e-10:
        raise SingularChainError(f"float solve residual {residual}")
    return _AbsorptionSolve(idx, transient_ids, sol[:, :k], sol[:, k], False)


def absorption_stats(
    n: int, k: int, start: Configuration,
    solve: _AbsorptionSolve | None = None,
    exact_limit: int = 200,
) -> AbsorptionStats:
    """Win probabilities per opinion and expected interactions to consensus."""
    if solve is None:
        solve = solve_absorption(n, k, exact_limit=exact_limit)
    gi = solve.index.index_of(start)
    win_of = start.consensus_opinion()
    if win_of is not None:
        one = Fraction(1) if solve.exact else 1.0
        zero = Fraction(0) if solve.exact else 0.0
        win = tuple(one if i + 1 == win_of else zero for i in range(k))
        return AbsorptionStats(start, win, zero, solve.exact)
    if gi not in solve.transient_ids:  # all-undecided trap
        zero = Fraction(0) if solve.exact else 0.0
        return AbsorptionStats(start, (zero,) * k, zero, solve.exact, degenerate=True)
    r = solve.transient_ids[gi]
    if solve.exact:
        return AbsorptionStats(start, tuple(solve.win[r]), solve.times[r], True)
    return AbsorptionStats(start, tuple(float(v) for v in solve.win[r]),
                           float(solve.times[r]), False)


@dataclass(frozen=True)
class ClosedFormMismatch:
    config: Configuration
    quantity: str
    closed_form: Fraction
    oracle: Fraction


@dataclass
class ClosedFormReport:
    checked_configs: int = 0
    checked_values: int = 0
    mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> dict:
        return {
            "checked_configs": self.checked_configs,
            "checked_values": self.checked_values,
            "ok": self.ok,
            "mismatches": [
                {
                    "config": {"counts": list(m.config.counts), "u": m.config.undecided},
                    "quantity": m.quantity,
                    "closed_form": str(m.closed_form),
                    "oracle": str(m.oracle),
                }
                for m in self.mismatches[:100]
            ],
        }


def verify_closed_forms(
    max_n: int = 6,
    max_k: int = 3,
    transition_fn=transition_probs,
    opinion_fn=opinion_probs,
    pair_fn=pair_diff_probs,
    first_mismatch_only: bool = False,
) -> ClosedFormReport:
    """Check every closed-form probability against enumeration marginals.

    For every configuration with n <= max_n and 2 <= k <= max_k, the
    one-step law is recomputed by type-pair enumeration and its marginals
    (undecided count, single opinion, pairwise difference) are compared to
    the closed forms as exact rationals.  The *_fn hooks exist so tests can
    inject a corrupted closed form as a negative control.
    """
    report = ClosedFormReport()

    def record(c, quantity, lhs, rhs):
        report.checked_values += 1
        if lhs != rhs:
            report.mismatches.append(ClosedFormMismatch(c, quantity, lhs, rhs))

    for n in range(1, max_n + 1):
        for k in range(2, max_k + 1):
            for c in enumerate_configs(n, k):
                report.checked_configs += 1
                dist = one_step_distribution(c)
                u = c.undecided

                def mass(pred) -> Fraction:
                    return sum(
                        (p for s, p in dist.items() if pred(s)), Fraction(0)
                    )

                tp = transition_fn(c)
                record(c, "p_minus", tp.p_minus, mass(lambda s: s.undecided == u - 1))
                record(c, "p_plus", tp.p_plus, mass(lambda s: s.undecided == u + 1))
                prod = mass(lambda s: s != c)
                oracle_tilde = (
                    mass(lambda s: s.undecided == u + 1) / prod if prod else None
                )
                report.checked_values += 1
                if tp.p_tilde_plus != oracle_tilde:
                    report.mismatches.append(
                        ClosedFormMismatch(c, "p_tilde_plus",
                                           tp.p_tilde_plus, oracle_tilde)
                    )
                for i in range(1, k + 1):
                    xi = c.count(i)
                    op = opinion_fn(c, i)
                    record(c, f"p_plus_{i}", op.p_plus,
                           mass(lambda s: s.count(i) == xi + 1))
                    record(c, f"p_minus_{i}", op.p_minus,
                           mass(lambda s: s.count(i) == xi - 1))
                    for j in range(1, k + 1):
                        if i == j:
                            continue
                        d = xi - c.count(j)
                        pp = pair_fn(c, i, j)
                        record(c, f"p_plus_{i}{j}", pp.p_plus,
                               mass(lambda s: s.count(i) - s.count(j) == d + 1))
                        record(c, f"p_minus_{i}{j}", pp.p_minus,
                               mass(lambda s: s.count(i) - s.count(j) == d - 1))
                if report.mismatches and first_mismatch_only:
                    return report
    return report
