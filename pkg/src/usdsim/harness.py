"""Monte-Carlo experiment orchestration.

Builds initial configurations for the standard regimes, fans trials out
over a thread pool (the compiled kernels release the GIL), aggregates
per-trial rows, fits scaling laws, and serializes everything to the fixed
CSV/JSON schemas documented in the README.

Reproducibility: a run is fully determined by (spec, master_seed).  Trial
streams are derived per trial id (see :mod:`usdsim.rng`), so the output is
byte-identical no matter how many workers execute it.
"""

from __future__ import annotations

import csv
import io
import json
import math
import subprocess
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from . import _kernels, __version__
from .core import Configuration
from .phases import PhaseReport, TraceSample
from .rng import state_from_seed, trial_seed

__all__ = [
    "ExperimentSpec",
    "TrialRow",
    "MetricSummary",
    "AggregateStats",
    "SweepRow",
    "FitResult",
    "make_initial",
    "run_trial",
    "run_trials",
    "sweep",
    "fit_scaling",
    "write_trials_csv",
    "write_traces_csv",
    "write_sweep_csv",
    "aggregate_json",
]

INIT_KINDS = ("uniform", "additive", "multiplicative", "explicit")

TRIAL_CSV_HEADER = (
    "trial_id,seed,n,k,init_kind,beta,ratio,u0,total_interactions,"
    "t1,t2,t3,t4,t5,winner,winner_was_initial_plurality,max_u,"
    "min_u_post_t1,envelope_violations"
)

TRACE_CSV_HEADER = (
    "trial_id,t,u,x_max,max_index,z_alpha,additive_bias,"
    "multiplicative_bias,significant_count"
)

SWEEP_CSV_HEADER = (
    "n,k,init_kind,beta,ratio,u0,trials,consensus_rate,plurality_win_rate,"
    "mean_total_interactions,median_total_interactions,"
    "q01_total_interactions,q99_total_interactions,max_total_interactions,"
    "mean_t1,mean_t2,mean_t3,mean_t4,mean_t5,envelope_total_violations,error"
)

MAX_TRACE_SAMPLES = 4_000_000


def default_beta(n: int) -> int:
    """Default additive bias 2*sqrt(n)*ln(n), comfortably above attrition."""
    return max(1, round(2.0 * math.sqrt(n) * math.log(n)))


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything one experiment needs; hashable and JSON-serializable."""

    n: int
    k: int
    init_kind: str = "uniform"
    beta: Optional[int] = None          # additive regime margin
    ratio: Optional[float] = None       # multiplicative regime factor
    counts: Optional[tuple[int, ...]] = None  # explicit regime
    u0: int = 0
    alpha: float = 1.0
    log_base: float = 2.0
    trials: int = 1
    master_seed: int = 0
    cap: Optional[int] = None           # default: the n^3 audit window
    mode: str = "auto"                  # exact | skip | auto (skip for n > 1e5)
    sample_every: Optional[int] = None  # trace cadence; None disables traces
    audit: bool = False                 # envelope checks on every productive step
    stop_phase: int = 0                 # 0 = run to consensus/cap, m = stop at T_m
    enforce_hypothesis: bool = True     # require u0 <= (n - x_1(0))/2

    def resolved_cap(self) -> int:
        cap = self.cap if self.cap is not None else self.n**3
        return min(cap, 2**62)

    def resolved_mode(self) -> str:
        if self.mode == "auto":
            return "skip" if self.n > 100_000 else "exact"
        if self.mode not in ("exact", "skip"):
            raise ValueError(f"unknown mode {self.mode!r}")
        return self.mode

    def resolved_sample_every(self) -> int:
        if self.sample_every is None:
            return 0
        if self.sample_every == 0:
            return max(1, self.n // 10)
        return self.sample_every

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counts"] = list(self.counts) if self.counts is not None else None
        return d


def make_initial(spec: ExperimentSpec) -> Configuration:
    """Initial configuration for the spec's regime.

    uniform: equal shares with the remainder on the lowest indices;
    additive: x_1 = x + beta (plus any rounding remainder), others x;
    multiplicative: others get floor((n-u0)/(ratio+k-1)), opinion 1 takes the
    rest, so the achieved ratio is always >= the requested one;
    explicit: counts passed through.
    """
    n, k, u0 = spec.n, spec.k, spec.u0
    if n < 1 or k < 2:
        raise ValueError("need n >= 1 and k >= 2")
    if not 0 <= u0 <= n:
        raise ValueError("u0 outside [0, n]")
    decided = n - u0
    kind = spec.init_kind
    if kind == "uniform":
        x, rem = divmod(decided, k)
        counts = tuple(x + 1 if i < rem else x for i in range(k))
    elif kind == "additive":
        beta = spec.beta if spec.beta is not None else default_beta(n)
        if beta < 0 or beta > decided:
            raise ValueError(f"additive bias {beta} infeasible for {decided} decided agents")
        x, rem = divmod(decided - beta, k)
        counts = (x + beta + rem,) + (x,) * (k - 1)
    elif kind == "multiplicative":
        ratio = spec.ratio if spec.ratio is not None else 2.0
        if ratio < 1.0:
            raise ValueError("multiplicative ratio must be >= 1")
        x = int(decided / (ratio + k - 1))
        if x < 1:
            raise ValueError("population too small for the requested ratio")
        counts = (decided - (k - 1) * x,) + (x,) * (k - 1)
    elif kind == "explicit":
        if spec.counts is None or len(spec.counts) != k:
            raise ValueError("explicit init needs a counts tuple of length k")
        if sum(spec.counts) != decided:
            raise ValueError("explicit counts must sum to n - u0")
        counts = tuple(spec.counts)
    else:
        raise ValueError(f"unknown init kind {kind!r}")
    c = Configuration(counts, u0)
    x1 = c.count(1)
    if spec.enforce_hypothesis and 2 * u0 > n - x1:
        raise ValueError(
            f"u0={u0} violates the hypothesis u0 <= (n - x_1)/2 = {(n - x1) / 2}"
        )
    if max(c.counts) > x1:
        raise ValueError("opinion 1 must hold the plurality")
    threshold = math.sqrt(n) / max(math.log(n), 1.0) ** 2
    if k > threshold:
        warnings.warn(
            f"k={k} exceeds sqrt(n)/log^2(n) ~ {threshold:.1f}; "
            "convergence guarantees may not apply",
            stacklevel=2,
        )
    return c


@dataclass(frozen=True)
class TrialRow:
    """One trial's outcome; the first 19 fields are the CSV schema."""

    trial_id: int
    seed: int
    n: int
    k: int
    init_kind: str
    beta: Optional[int]
    ratio: Optional[float]
    u0: int
    total_interactions: int
    t1: Optional[int]
    t2: Optional[int]
    t3: Optional[int]
    t4: Optional[int]
    t5: Optional[int]
    winner: Optional[int]
    winner_was_initial_plurality: bool
    max_u: int
    min_u_post_t1: Optional[int]
    envelope_violations: int
    # extra (non-CSV) diagnostics
    stop_reason: str = "cap"
    productive_steps: int = 0
    initial_plurality: int = 0
    plurality_at_t2: Optional[int] = None
    upper_violations: int = 0
    lower_violations: int = 0
    final_u: int = 0
    final_counts: tuple[int, ...] = ()

    def phase_report(self) -> PhaseReport:
        return PhaseReport(
            t1=self.t1, t2=self.t2, t3=self.t3, t4=self.t4, t5=self.t5,
            winner=self.winner,
            initial_plurality=self.initial_plurality,
            plurality_at_t2=self.plurality_at_t2,
            winner_was_initial_plurality=self.winner_was_initial_plurality,
        )

    def csv_row(self) -> str:
        def cell(v) -> str:
            if v is None:
                return ""
            if isinstance(v, bool):
                return "1" if v else "0"
            if isinstance(v, float):
                return repr(v)
            return str(v)

        return ",".join(
            cell(v)
            for v in (
                self.trial_id, self.seed, self.n, self.k, self.init_kind,
                self.beta, self.ratio, self.u0, self.total_interactions,
                self.t1, self.t2, self.t3, self.t4, self.t5, self.winner,
                self.winner_was_initial_plurality, self.max_u,
                self.min_u_post_t1, self.envelope_violations,
            )
        )


_STOP_NAMES = {0: "consensus", 1: "cap", 2: "predicate"}


def run_trial(
    spec: ExperimentSpec, trial_id: int, collect_trace: bool = False
) -> tuple[TrialRow, list[TraceSample]]:
    """Execute one seeded trial through the compiled run."""
    initial = make_initial(spec)
    n = spec.n
    seed = trial_seed(spec.master_seed, trial_id)
    state = state_from_seed(seed)
    cap = spec.resolved_cap()
    sample_every = spec.resolved_sample_every() if collect_trace else 0
    if sample_every > 0:
        buf = min(cap // sample_every + 2, MAX_TRACE_SAMPLES)
    else:
        buf = 1
    log_n = math.log(n, spec.log_base) if n > 1 else 0.0
    sig_margin = spec.alpha * math.sqrt(n) * log_n
    env_slack = 8.0 * math.sqrt(n * math.log(n)) if n > 1 else 0.0
    out = _kernels.run_usd(
        np.array(initial.counts, dtype=np.int64),
        initial.undecided,
        cap,
        spec.resolved_mode() == "skip",
        state,
        spec.alpha,
        sig_margin,
        env_slack,
        spec.audit,
        sample_every,
        spec.stop_phase,
        buf,
    )
    (counts, u, t, stop_code, productive, times, init_idx, t2_idx, winner,
     max_u, min_u_post_t1, upper_viol, lower_viol, n_trace,
     tr_t, tr_u, tr_xmax, tr_mi, tr_z, tr_add, tr_mult, tr_sig) = out

    def opt(v: int) -> Optional[int]:
        return None if v < 0 else int(v)

    win = None if winner == 0 else int(winner)
    row = TrialRow(
        trial_id=trial_id,
        seed=seed,
        n=n,
        k=spec.k,
        init_kind=spec.init_kind,
        beta=spec.beta if spec.init_kind == "additive" else None,
        ratio=spec.ratio if spec.init_kind == "multiplicative" else None,
        u0=spec.u0,
        total_interactions=int(t),
        t1=opt(times[0]), t2=opt(times[1]), t3=opt(times[2]),
        t4=opt(times[3]), t5=opt(times[4]),
        winner=win,
        winner_was_initial_plurality=(win is not None and win == int(init_idx)),
        max_u=int(max_u),
        min_u_post_t1=opt(min_u_post_t1),
        envelope_violations=int(upper_viol + lower_viol),
        stop_reason=_STOP_NAMES[int(stop_code)],
        productive_steps=int(productive),
        initial_plurality=int(init_idx),
        plurality_at_t2=None if times[1] < 0 else int(t2_idx),
        upper_violations=int(upper_viol),
        lower_violations=int(lower_viol),
        final_u=int(u),
        final_counts=tuple(int(x) for x in counts),
    )
    trace = [
        TraceSample(
            t=int(tr_t[i]), u=int(tr_u[i]), x_max=int(tr_xmax[i]),
            max_index=int(tr_mi[i]), z_alpha=float(tr_z[i]),
            additive_bias=int(tr_add[i]),
            multiplicative_bias=float(tr_mult[i]),
            significant_count=int(tr_sig[i]),
        )
        for i in range(int(n_trace))
    ]
    return row, trace


@dataclass(frozen=True)
class MetricSummary:
    mean: float
    median: float
    q01: float
    q99: float
    max: float
    count: int

    @classmethod
    def of(cls, values: Sequence[float]) -> Optional["MetricSummary"]:
        if not values:
            return None
        arr = np.asarray(values, dtype=np.float64)
        return cls(
            mean=float(arr.mean()),
            median=float(np.quantile(arr, 0.5)),
            q01=float(np.quantile(arr, 0.01)),
            q99=float(np.quantile(arr, 0.99)),
            max=float(arr.max()),
            count=len(values),
        )


@dataclass(frozen=True)
class AggregateStats:
    trials: int
    consensus_trials: int
    plurality_win_rate: float
    winner_counts: dict
    metrics: dict
    envelope_trials_with_violations: int
    envelope_total_violations: int

    def metric(self, name: str) -> Optional[MetricSummary]:
        return self.metrics.get(name)

    def to_dict(self) -> dict:
        return {
            "trials": self.trials,
            "consensus_trials": self.consensus_trials,
            "plurality_win_rate": self.plurality_win_rate,
            "winner_counts": {str(k): v for k, v in sorted(self.winner_counts.items())},
            "metrics": {
                name: asdict(m) for name, m in self.metrics.items() if m is not None
            },
            "envelope_trials_with_violations": self.envelope_trials_with_violations,
            "envelope_total_violations": self.envelope_total_violations,
        }


def aggregate(rows: Sequence[TrialRow]) -> AggregateStats:
    winner_counts: dict[int, int] = {}
    for r in rows:
        if r.winner is not None:
            winner_counts[r.winner] = winner_counts.get(r.winner, 0) + 1
    consensus = sum(1 for r in rows if r.winner is not None)
    plurality = sum(1 for r in rows if r.winner_was_initial_plurality)
    metrics = {
        "total_interactions": MetricSummary.of([r.total_interactions for r in rows]),
        "t1": MetricSummary.of([r.t1 for r in rows if r.t1 is not None]),
        "t2": MetricSummary.of([r.t2 for r in rows if r.t2 is not None]),
        "t3": MetricSummary.of([r.t3 for r in rows if r.t3 is not None]),
        "t4": MetricSummary.of([r.t4 for r in rows if r.t4 is not None]),
        "t5": MetricSummary.of([r.t5 for r in rows if r.t5 is not None]),
        "max_u": MetricSummary.of([r.max_u for r in rows]),
        "min_u_post_t1": MetricSummary.of(
            [r.min_u_post_t1 for r in rows if r.min_u_post_t1 is not None]
        ),
    }
    return AggregateStats(
        trials=len(rows),
        consensus_trials=consensus,
        plurality_win_rate=plurality / len(rows) if rows else 0.0,
        winner_counts=winner_counts,
        metrics=metrics,
        envelope_trials_with_violations=sum(
            1 for r in rows if r.envelope_violations > 0
        ),
        envelope_total_violations=sum(r.envelope_violations for r in rows),
    )


def run_trials(
    spec: ExperimentSpec,
    workers: Optional[int] = None,
    collect_traces: bool = False,
) -> tuple[AggregateStats, list[TrialRow], dict[int, list[TraceSample]]]:
    """Run spec.trials independent trials in parallel and aggregate them.

    Returns (aggregate, rows ordered by trial id, traces keyed by trial id).
    Results do not depend on the worker count.
    """
    if spec.trials < 1:
        raise ValueError("need at least one trial")
    make_initial(spec)  # validate the spec before spawning workers
    ids = list(range(spec.trials))
    if workers is None:
        workers = min(8, spec.trials)
    if workers <= 1 or spec.trials == 1:
        results = [run_trial(spec, i, collect_traces) for i in ids]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda i: run_trial(spec, i, collect_traces), ids))
    rows = [r for r, _ in results]
    traces = {r.trial_id: tr for r, tr in results if tr}
    return aggregate(rows), rows, traces


@dataclass(frozen=True)
class SweepRow:
    n: int
    k: int
    init_kind: str
    beta: Optional[int]
    ratio: Optional[float]
    u0: int
    trials: int
    consensus_rate: float
    plurality_win_rate: float
    mean_total_interactions: float
    median_total_interactions: float
    q01_total_interactions: float
    q99_total_interactions: float
    max_total_interactions: float
    mean_t1: Optional[float]
    mean_t2: Optional[float]
    mean_t3: Optional[float]
    mean_t4: Optional[float]
    mean_t5: Optional[float]
    envelope_total_violations: int
    error: Optional[str] = None

    def key(self) -> str:
        return f"n={self.n},k={self.k},init={self.init_kind}"

    def to_dict(self) -> dict:
        return asdict(self)


def _cell_key(spec: ExperimentSpec) -> str:
    return f"n={spec.n},k={spec.k},init={spec.init_kind}"


def _cell_seed(master_seed: int, n: int, k: int) -> int:
    seq = np.random.SeedSequence(master_seed, spawn_key=(n, k))
    return int(seq.generate_state(1, np.uint64)[0])


def sweep(
    base: ExperimentSpec,
    ns: Sequence[int],
    ks: Sequence[int],
    manifest_path: Optional[str | Path] = None,
    workers: Optional[int] = None,
) -> list[SweepRow]:
    """Cross product of population sizes and opinion counts, one row each.

    Cell seeds derive from (master_seed, n, k), so the table only depends on
    the grid content, not its order.  A manifest file makes the sweep
    resumable; failed cells produce a flagged row and the sweep continues.
    """
    manifest: dict[str, dict] = {}
    if manifest_path is not None:
        path = Path(manifest_path)
        if path.exists():
            manifest = json.loads(path.read_text())
    rows: list[SweepRow] = []
    for n in ns:
        for k in ks:
            spec = replace(base, n=n, k=k,
                           master_seed=_cell_seed(base.master_seed, n, k))
            key = _cell_key(spec)
            if key in manifest:
                rows.append(SweepRow(**manifest[key]))
                continue
            try:
                stats, _, _ = run_trials(spec, workers=workers)
                m = stats.metric("total_interactions")

                def mean_of(name: str) -> Optional[float]:
                    s = stats.metric(name)
                    return None if s is None else s.mean

                row = SweepRow(
                    n=n, k=k, init_kind=spec.init_kind, beta=spec.beta,
                    ratio=spec.ratio, u0=spec.u0, trials=spec.trials,
                    consensus_rate=stats.consensus_trials / stats.trials,
                    plurality_win_rate=stats.plurality_win_rate,
                    mean_total_interactions=m.mean,
                    median_total_interactions=m.median,
                    q01_total_interactions=m.q01,
                    q99_total_interactions=m.q99,
                    max_total_interactions=m.max,
                    mean_t1=mean_of("t1"), mean_t2=mean_of("t2"),
                    mean_t3=mean_of("t3"), mean_t4=mean_of("t4"),
                    mean_t5=mean_of("t5"),
                    envelope_total_violations=stats.envelope_total_violations,
                )
            except Exception as exc:  # flagged row, sweep continues
                row = SweepRow(
                    n=n, k=k, init_kind=base.init_kind, beta=base.beta,
                    ratio=base.ratio, u0=base.u0, trials=base.trials,
                    consensus_rate=0.0, plurality_win_rate=0.0,
                    mean_total_interactions=math.nan,
                    median_total_interactions=math.nan,
                    q01_total_interactions=math.nan,
                    q99_total_interactions=math.nan,
                    max_total_interactions=math.nan,
                    mean_t1=None, mean_t2=None, mean_t3=None,
                    mean_t4=None, mean_t5=None,
                    envelope_total_violations=0,
                    error=f"{type(exc).__name__}: {exc}",
                )
            rows.append(row)
            manifest[key] = row.to_dict()
            if manifest_path is not None:
                Path(manifest_path).write_text(json.dumps(manifest, sort_keys=True))
    return rows


@dataclass(frozen=True)
class FitResult:
    slope: float
    intercept: float
    r_squared: float
    predictor: str
    points: int


_PREDICTORS = {
    "k": lambda n, k: k,
    "n": lambda n, k: n,
    "n_log_n": lambda n, k: n * math.log(n),
    "k_n_log_n": lambda n, k: k * n * math.log(n),
}


def fit_scaling(
    rows: Iterable[SweepRow | dict],
    predictor: str = "k_n_log_n",
    response: str = "mean_total_interactions",
) -> FitResult:
    """Log-log least squares of the response against the chosen predictor.

    The slope is the estimated exponent: 1.0 means the response scales
    linearly in the predictor.
    """
    if predictor not in _PREDICTORS:
        raise ValueError(f"unknown predictor {predictor!r}")
    fn = _PREDICTORS[predictor]
    xs, ys = [], []
    for row in rows:
        d = row.to_dict() if isinstance(row, SweepRow) else dict(row)
        if d.get("error"):
            continue
        xs.append(fn(d["n"], d["k"]))
        ys.append(d[response])
    if len(xs) < 3:
        raise ValueError("need at least three rows to fit")
    lx = np.log(np.asarray(xs, dtype=np.float64))
    ly = np.log(np.asarray(ys, dtype=np.float64))
    if np.ptp(lx) == 0:
        raise ValueError("predictor is constant across rows")
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float(np.sum(resid**2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 and ss_res < 1e-18 else 1.0 - ss_res / ss_tot if ss_tot else 0.0
    return FitResult(float(slope), float(intercept), r2, predictor, len(xs))


# ---------------------------------------------------------------- output


def build_identifier() -> str:
    try:
        out = subprocess.run(
            ["git", "rev-parse", "--short", "HEAD"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).parent,
        )
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return "unknown"


def write_trials_csv(rows: Sequence[TrialRow], path: str | Path) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(TRIAL_CSV_HEADER + "\n")
        for r in rows:
            f.write(r.csv_row() + "\n")


def trials_csv_text(rows: Sequence[TrialRow]) -> str:
    buf = io.StringIO()
    buf.write(TRIAL_CSV_HEADER + "\n")
    for r in rows:
        buf.write(r.csv_row() + "\n")
    return buf.getvalue()


def write_traces_csv(traces: dict[int, list[TraceSample]], path: str | Path) -> None:
    with open(path, "w", newline="\n") as f:
        f.write(TRACE_CSV_HEADER + "\n")
        for trial_id in sorted(traces):
            for s in traces[trial_id]:
                f.write(
                    f"{trial_id},{s.t},{s.u},{s.x_max},{s.max_index},"
                    f"{s.z_alpha!r},{s.additive_bias},"
                    f"{s.multiplicative_bias!r},{s.significant_count}\n"
                )


def aggregate_json(spec: ExperimentSpec, stats: AggregateStats) -> str:
    doc = {
        "spec": spec.to_dict(),
        "aggregate": stats.to_dict(),
        "version": __version__,
        "build": build_identifier(),
    }
    return json.dumps(doc, indent=2, sort_keys=True)


def write_sweep_csv(rows: Sequence[SweepRow], path: str | Path) -> None:
    with open(path, "w", newline="\n") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(SWEEP_CSV_HEADER.split(","))
        for r in rows:
            d = r.to_dict()
            writer.writerow(
                ["" if d[c] is None else d[c] for c in SWEEP_CSV_HEADER.split(",")]
            )
