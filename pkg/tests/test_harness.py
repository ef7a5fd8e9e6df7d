"""Harness: initial configurations, trials, determinism, sweeps, fits."""

import json
import math

import numpy as np
import pytest

from usdsim.engine import StopReason, run_until
from usdsim.harness import (
    TRIAL_CSV_HEADER,
    ExperimentSpec,
    aggregate_json,
    default_beta,
    fit_scaling,
    make_initial,
    run_trial,
    run_trials,
    sweep,
    trials_csv_text,
    write_sweep_csv,
    write_trials_csv,
)
from usdsim.rng import Xoshiro256, trial_seed


# ------------------------------------------------------------- make_initial

def test_make_initial_uniform():
    spec = ExperimentSpec(n=12, k=3, init_kind="uniform")
    assert make_initial(spec).counts == (4, 4, 4)
    spec = ExperimentSpec(n=14, k=3, init_kind="uniform")
    assert make_initial(spec).counts == (5, 5, 4)  # remainder to low indices


def test_make_initial_additive():
    spec = ExperimentSpec(n=10**4, k=2, init_kind="additive", beta=100)
    assert make_initial(spec).counts == (5050, 4950)
    # default beta is 2*sqrt(n)*ln(n)
    spec = ExperimentSpec(n=10**4, k=2, init_kind="additive")
    c = make_initial(spec)
    assert c.count(1) - c.count(2) >= default_beta(10**4)
    assert default_beta(10**4) == round(2 * 100 * math.log(10**4))


def test_make_initial_multiplicative():
    spec = ExperimentSpec(n=9, k=2, init_kind="multiplicative", ratio=2.0)
    assert make_initial(spec).counts == (6, 3)
    # achieved ratio is never below the requested one
    spec = ExperimentSpec(n=10**5 + 7, k=5, init_kind="multiplicative", ratio=1.5)
    c = make_initial(spec)
    assert c.count(1) >= 1.5 * c.count(2)


def test_make_initial_explicit_and_errors():
    spec = ExperimentSpec(n=10, k=3, init_kind="explicit", counts=(5, 3, 2))
    assert make_initial(spec).counts == (5, 3, 2)
    with pytest.raises(ValueError):
        make_initial(ExperimentSpec(n=10, k=3, init_kind="explicit", counts=(9, 3, 2)))
    with pytest.raises(ValueError):
        make_initial(ExperimentSpec(n=10, k=3, init_kind="explicit", counts=(2, 5, 3)))
    with pytest.raises(ValueError):
        make_initial(ExperimentSpec(n=10, k=2, init_kind="additive", beta=11))
    with pytest.raises(ValueError):
        make_initial(ExperimentSpec(n=8, k=8, init_kind="multiplicative", ratio=9.0))
    with pytest.raises(ValueError):
        make_initial(ExperimentSpec(n=10, k=2, init_kind="bogus"))


def test_hypothesis_toggle():
    # u0 beyond (n - x1)/2 violates the convergence hypothesis
    bad = ExperimentSpec(n=12, k=2, init_kind="explicit", counts=(4, 2), u0=6)
    with pytest.raises(ValueError):
        make_initial(bad)
    relaxed = ExperimentSpec(n=12, k=2, init_kind="explicit", counts=(4, 2),
                             u0=6, enforce_hypothesis=False)
    assert make_initial(relaxed).undecided == 6


def test_k_threshold_warning():
    with pytest.warns(UserWarning, match="exceeds"):
        make_initial(ExperimentSpec(n=100, k=50, init_kind="uniform"))


# ------------------------------------------------------------------- trials

def test_trial_matches_engine_run_until():
    # one harness trial is exactly a seeded run_until in the same mode
    spec = ExperimentSpec(n=60, k=3, trials=1, master_seed=31, mode="exact")
    row, _ = run_trial(spec, 0)
    rng = Xoshiro256.from_seed(trial_seed(31, 0))
    res = run_until(make_initial(spec), lambda c, t: False,
                    spec.resolved_cap(), rng, mode="exact")
    assert res.stop_reason is StopReason.CONSENSUS
    assert row.total_interactions == res.interactions
    assert row.winner == res.consensus_opinion
    assert row.final_counts == res.final.counts


def test_run_trials_deterministic_across_workers():
    spec = ExperimentSpec(n=500, k=4, trials=8, master_seed=9, mode="skip")
    _, rows1, _ = run_trials(spec, workers=1)
    _, rows3, _ = run_trials(spec, workers=3)
    assert trials_csv_text(rows1) == trials_csv_text(rows3)


def test_run_trials_conservation_and_reports():
    spec = ExperimentSpec(n=300, k=3, trials=6, master_seed=4, audit=True)
    stats, rows, _ = run_trials(spec)
    assert stats.trials == 6 and stats.consensus_trials == 6
    for row in rows:
        assert sum(row.final_counts) + row.final_u == 300
        assert row.winner == row.final_counts.index(300) + 1
        times = [t for t in (row.t1, row.t2, row.t3, row.t4, row.t5)
                 if t is not None]
        assert times == sorted(times)
        assert row.t5 == row.total_interactions
        assert row.stop_reason == "consensus"
        rep = row.phase_report()
        assert rep.winner == row.winner


def test_uniform_win_rate_symmetric():
    spec = ExperimentSpec(n=200, k=4, trials=1200, master_seed=77, mode="skip")
    stats, rows, _ = run_trials(spec, workers=4)
    # uniform init: each opinion wins ~1/4; 3.5 sigma over 1200 trials
    p, trials = 0.25, 1200
    sigma = math.sqrt(p * (1 - p) / trials)
    for op in (1, 2, 3, 4):
        rate = stats.winner_counts.get(op, 0) / trials
        assert abs(rate - p) < 3.5 * sigma


def test_stop_phase_short_circuits():
    spec = ExperimentSpec(n=10**4, k=8, trials=2, master_seed=5, stop_phase=1)
    _, rows, _ = run_trials(spec)
    for row in rows:
        assert row.t1 is not None
        assert row.t5 is None
        assert row.stop_reason == "predicate"
        assert row.total_interactions == row.t1


def test_cap_stop_reason():
    spec = ExperimentSpec(n=1000, k=3, trials=2, master_seed=6, cap=10)
    _, rows, _ = run_trials(spec)
    for row in rows:
        assert row.stop_reason == "cap"
        assert row.total_interactions == 10
        assert row.winner is None and row.t5 is None


def test_traces_collected_at_cadence():
    spec = ExperimentSpec(n=400, k=3, trials=1, master_seed=2,
                          sample_every=100, mode="exact")
    _, rows, traces = run_trials(spec, collect_traces=True)
    tr = traces[0]
    assert tr[0].t == 0
    assert all(b.t - a.t == 100 for a, b in zip(tr, tr[1:]))
    assert tr[-1].t <= rows[0].total_interactions
    for s in tr:
        assert 0 <= s.u <= 400 and 0 < s.x_max <= 400
        assert s.z_alpha == 400 - 2 * s.u - 1.0 * s.x_max


# -------------------------------------------------------------------- output

def test_trial_csv_schema(tmp_path):
    spec = ExperimentSpec(n=100, k=2, trials=2, master_seed=1)
    _, rows, _ = run_trials(spec)
    path = tmp_path / "rows.csv"
    write_trials_csv(rows, path)
    text = path.read_text()
    lines = text.splitlines()
    assert lines[0] == TRIAL_CSV_HEADER
    assert text.endswith("\n") and "\r" not in text
    first = lines[1].split(",")
    assert len(first) == len(TRIAL_CSV_HEADER.split(","))
    assert first[0] == "0" and first[2] == "100" and first[3] == "2"
    # unset beta/ratio serialize as empty cells
    assert first[5] == "" and first[6] == ""


def test_aggregate_json_shape():
    spec = ExperimentSpec(n=100, k=2, trials=3, master_seed=8)
    stats, _, _ = run_trials(spec)
    doc = json.loads(aggregate_json(spec, stats))
    assert doc["spec"]["n"] == 100
    assert doc["aggregate"]["trials"] == 3
    assert "total_interactions" in doc["aggregate"]["metrics"]
    assert doc["version"]
    assert "build" in doc


def test_aggregate_quantiles_consistent():
    spec = ExperimentSpec(n=200, k=2, trials=20, master_seed=3)
    stats, rows, _ = run_trials(spec)
    totals = np.array([r.total_interactions for r in rows], dtype=float)
    m = stats.metric("total_interactions")
    assert m.mean == pytest.approx(totals.mean())
    assert m.median == pytest.approx(np.quantile(totals, 0.5))
    assert m.q01 <= m.median <= m.q99 <= m.max == totals.max()
    assert m.count == 20


# --------------------------------------------------------------------- sweep

def test_sweep_grid_and_resume(tmp_path):
    base = ExperimentSpec(n=100, k=2, trials=4, master_seed=12)
    manifest = tmp_path / "manifest.json"
    rows = sweep(base, ns=[100, 200], ks=[2, 3], manifest_path=manifest)
    assert len(rows) == 4
    assert [(r.n, r.k) for r in rows] == [(100, 2), (100, 3), (200, 2), (200, 3)]
    # resuming returns identical rows without recomputation
    rows2 = sweep(base, ns=[100, 200], ks=[2, 3], manifest_path=manifest)
    assert rows == rows2
    # identical master seed, fresh manifest: identical table
    rows3 = sweep(base, ns=[100, 200], ks=[2, 3])
    assert rows3 == rows
    path = tmp_path / "sweep.csv"
    write_sweep_csv(rows, path)
    assert path.read_text().count("\n") == 5


def test_sweep_empty_grid():
    base = ExperimentSpec(n=100, k=2, trials=2, master_seed=1)
    assert sweep(base, ns=[], ks=[2, 3]) == []


def test_sweep_flags_failures_and_continues():
    base = ExperimentSpec(n=100, k=2, trials=2, master_seed=1,
                          init_kind="additive", beta=10**6)  # infeasible
    rows = sweep(base, ns=[100], ks=[2])
    assert len(rows) == 1 and rows[0].error is not None


def test_sweep_mean_interactions_grow_with_k():
    base = ExperimentSpec(n=400, k=2, trials=30, master_seed=21, mode="skip")
    rows = sweep(base, ns=[400], ks=[2, 4, 8])
    means = [r.mean_total_interactions for r in rows]
    assert means[0] < means[1] < means[2]


# ----------------------------------------------------------------- fitting

def test_fit_scaling_exact_fixture():
    rows = [
        {"n": n, "k": k, "mean_total_interactions": 7 * k * n * math.log(n),
         "error": None}
        for n in (10**3, 10**4) for k in (2, 4, 8)
    ]
    fit = fit_scaling(rows, predictor="k_n_log_n")
    assert abs(fit.slope - 1.0) < 1e-9
    assert abs(fit.r_squared - 1.0) < 1e-9
    assert fit.intercept == pytest.approx(math.log(7), abs=1e-9)


def test_fit_scaling_constant_rows():
    rows = [{"n": 100, "k": k, "mean_total_interactions": 5.0, "error": None}
            for k in (2, 4, 8)]
    fit = fit_scaling(rows, predictor="k")
    assert fit.slope == pytest.approx(0.0, abs=1e-12)


def test_fit_scaling_errors():
    rows = [{"n": 100, "k": 2, "mean_total_interactions": 1.0, "error": None}]
    with pytest.raises(ValueError):
        fit_scaling(rows, predictor="k")
    same = [{"n": 100, "k": 2, "mean_total_interactions": float(i + 1),
             "error": None} for i in range(4)]
    with pytest.raises(ValueError):
        fit_scaling(same, predictor="k")  # zero predictor variance
    with pytest.raises(ValueError):
        fit_scaling(same, predictor="nope")
