"""Command-line interface.

Subcommands: simulate, sweep, phases, verify-oracle, couple, compare-bounds.
Outputs go to --out (CSV or JSON per --format); see the README for the
exact file schemas.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__, coupling, harness, oracle
from .core import Configuration, bound_comparison
from .rng import Xoshiro256


def _add_spec_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--n", type=int, required=True, help="population size")
    p.add_argument("--k", type=int, required=True, help="number of opinions")
    p.add_argument("--init", choices=("uniform", "additive", "multiplicative", "file"),
                   default="uniform", help="initial-configuration regime")
    p.add_argument("--counts-file", type=str, default=None,
                   help="JSON file with explicit counts (for --init file)")
    p.add_argument("--beta", type=int, default=None, help="additive bias margin")
    p.add_argument("--ratio", type=float, default=None, help="multiplicative bias factor")
    p.add_argument("--u0", type=int, default=0, help="initial undecided agents")
    p.add_argument("--alpha", type=float, default=1.0, help="significance constant")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--cap", type=int, default=None, help="interaction cap (default n^3)")
    p.add_argument("--mode", choices=("exact", "skip", "auto"), default="auto")
    p.add_argument("--sample-every", type=int, default=None,
                   help="trace cadence in interactions (0 = n/10 default)")
    p.add_argument("--audit", action="store_true",
                   help="check the undecided envelope on every productive step")
    p.add_argument("--workers", type=int, default=None)


def _spec_from_args(args) -> harness.ExperimentSpec:
    init_kind = args.init
    counts = None
    if init_kind == "file":
        if not args.counts_file:
            raise SystemExit("--init file requires --counts-file")
        counts = tuple(json.loads(Path(args.counts_file).read_text()))
        init_kind = "explicit"
    return harness.ExperimentSpec(
        n=args.n, k=args.k, init_kind=init_kind, beta=args.beta,
        ratio=args.ratio, counts=counts, u0=args.u0, alpha=args.alpha,
        trials=args.trials, master_seed=args.seed, cap=args.cap,
        mode=args.mode, sample_every=args.sample_every, audit=args.audit,
    )


def _write(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text)


def cmd_simulate(args) -> int:
    spec = _spec_from_args(args)
    collect = args.trace_out is not None
    stats, rows, traces = harness.run_trials(spec, workers=args.workers,
                                             collect_traces=collect)
    if args.format == "csv":
        _write(harness.trials_csv_text(rows), args.out)
    else:
        _write(harness.aggregate_json(spec, stats), args.out)
    if args.trace_out:
        harness.write_traces_csv(traces, args.trace_out)
    return 0


def cmd_phases(args) -> int:
    spec = _spec_from_args(args)
    _, rows, _ = harness.run_trials(spec, workers=args.workers)
    reports = [dict(trial_id=r.trial_id, **r.phase_report().to_dict()) for r in rows]
    if args.format == "json":
        _write(json.dumps(reports, indent=2), args.out)
    else:
        header = ("trial_id,t1,t2,t3,t4,t5,winner,initial_plurality,"
                  "plurality_at_t2,winner_was_initial_plurality")
        lines = [header]
        for rep in reports:
            lines.append(",".join(
                "" if rep[c] is None else
                ("1" if rep[c] is True else "0" if rep[c] is False else str(rep[c]))
                for c in header.split(",")
            ))
        _write("\n".join(lines) + "\n", args.out)
    return 0


def cmd_sweep(args) -> int:
    spec = harness.ExperimentSpec(
        n=args.ns[0], k=args.ks[0], init_kind=args.init,
        beta=args.beta, ratio=args.ratio, u0=args.u0, alpha=args.alpha,
        trials=args.trials, master_seed=args.seed, cap=args.cap,
        mode=args.mode, audit=args.audit,
    )
    rows = harness.sweep(spec, args.ns, args.ks,
                         manifest_path=args.manifest, workers=args.workers)
    if args.format == "json":
        _write(json.dumps([r.to_dict() for r in rows], indent=2), args.out)
    else:
        if args.out is None:
            raise SystemExit("sweep --format csv needs --out")
        harness.write_sweep_csv(rows, args.out)
    if args.fit:
        fit = harness.fit_scaling(rows, predictor=args.fit)
        print(f"fit {args.fit}: slope={fit.slope:.4f} "
              f"intercept={fit.intercept:.4f} R2={fit.r_squared:.6f}")
    return 0


def cmd_verify_oracle(args) -> int:
    report = oracle.verify_closed_forms(max_n=args.max_n, max_k=args.max_k)
    _write(json.dumps(report.to_dict(), indent=2), args.out)
    return 0 if report.ok else 1


def cmd_couple(args) -> int:
    counts = [args.x1] + [0] * (args.k - 1)
    rest = args.n - args.u0 - args.x1
    if rest < 0:
        raise SystemExit("x1 + u0 exceeds n")
    base, rem = divmod(rest, args.k - 1)
    for i in range(1, args.k):
        counts[i] = base + (1 if i - 1 < rem else 0)
    c = Configuration(tuple(counts), args.u0)
    cap = args.cap if args.cap is not None else args.n**3
    results = []
    for trial in range(args.trials):
        rng = Xoshiro256.for_trial(args.seed, trial)
        results.append(coupling.run_coupled(c, cap, rng))
    violations = [r for r in results if not r.held]
    both = [r for r in results
            if r.t_consensus_k is not None and r.t_consensus_2 is not None]
    ordered = sum(1 for r in both if r.t_consensus_k <= r.t_consensus_2)
    summary = {
        "n": args.n, "k": args.k, "x1": args.x1, "u0": args.u0,
        "trials": args.trials, "cap": cap,
        "violations": len(violations),
        "first_violations": [r.first_violation for r in violations][:10],
        "both_converged": len(both),
        "k_no_later_than_2": ordered,
        "mean_t_consensus_k": (
            sum(r.t_consensus_k for r in both) / len(both) if both else None
        ),
        "mean_t_consensus_2": (
            sum(r.t_consensus_2 for r in both) / len(both) if both else None
        ),
    }
    _write(json.dumps(summary, indent=2), args.out)
    return 0 if not violations else 1


def cmd_compare_bounds(args) -> int:
    if args.counts:
        counts = tuple(json.loads(args.counts))
        c = Configuration(counts, args.u0)
    else:
        rest = args.n - args.u0 - args.x1
        if args.k < 2 or rest < 0:
            raise SystemExit("invalid n/k/x1 combination")
        base, rem = divmod(rest, args.k - 1)
        counts = (args.x1,) + tuple(
            base + (1 if i < rem else 0) for i in range(args.k - 1)
        )
        c = Configuration(counts, args.u0)
    cmp_ = bound_comparison(c, log_base=args.log_base)
    _write(json.dumps({
        "counts": list(c.counts), "u": c.undecided,
        "md": cmp_.md,
        "gossip_bound": cmp_.gossip_bound,
        "population_bound": cmp_.population_bound,
        "verdict": cmp_.verdict,
        "crossover": cmp_.crossover,
    }, indent=2), args.out)
    return 0


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="usdsim",
        description="k-opinion undecided-state dynamics simulator",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run seeded trials, emit per-trial rows")
    _add_spec_args(p)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--trace-out", type=str, default=None,
                   help="also write trace samples to this CSV")
    p.set_defaults(fn=cmd_simulate)

    p = sub.add_parser("phases", help="run trials, emit phase reports")
    _add_spec_args(p)
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(fn=cmd_phases)

    p = sub.add_parser("sweep", help="grid of (n, k) cells, one aggregate row each")
    p.add_argument("--ns", type=int, nargs="+", required=True)
    p.add_argument("--ks", type=int, nargs="+", required=True)
    p.add_argument("--init", choices=("uniform", "additive", "multiplicative"),
                   default="uniform")
    p.add_argument("--beta", type=int, default=None)
    p.add_argument("--ratio", type=float, default=None)
    p.add_argument("--u0", type=int, default=0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--mode", choices=("exact", "skip", "auto"), default="auto")
    p.add_argument("--audit", action="store_true")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--manifest", type=str, default=None,
                   help="JSON manifest for resumable sweeps")
    p.add_argument("--fit", choices=tuple(harness._PREDICTORS), default=None,
                   help="print a scaling fit over the sweep rows")
    p.add_argument("--out", type=str, default=None)
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("verify-oracle",
                       help="closed forms vs enumeration, exact equality")
    p.add_argument("--max-n", type=int, default=6)
    p.add_argument("--max-k", type=int, default=3)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(fn=cmd_verify_oracle)

    p = sub.add_parser("couple", help="two-process coupling with invariant checks")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--x1", type=int, required=True,
                   help="initial support of the plurality opinion")
    p.add_argument("--u0", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--cap", type=int, default=None)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(fn=cmd_couple)

    p = sub.add_parser("compare-bounds",
                       help="gossip-model vs population-model running-time bounds")
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--k", type=int, default=None)
    p.add_argument("--x1", type=int, default=None)
    p.add_argument("--u0", type=int, default=0)
    p.add_argument("--counts", type=str, default=None,
                   help="explicit counts as a JSON list")
    p.add_argument("--log-base", type=float, default=2.0)
    p.add_argument("--out", type=str, default=None)
    p.set_defaults(fn=cmd_compare_bounds)

    args = parser.parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    raise SystemExit(main())
