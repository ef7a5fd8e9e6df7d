"""Figure rendering for simulator outputs.

Four kinds:

  scaling     sweep CSV -> mean interactions vs k, log-log, fitted slope
  trajectory  trace CSV (+ aggregate JSON for n) -> u(t) with the analytic
              undecided-count envelope overlaid and a T1 marker
  phases      trials CSV -> per-trial phase timelines (t1..t5)
  win-rate    trials CSV -> winner frequency per opinion

Rendering is read-only and idempotent; every figure carries a caption (and
PNG metadata) echoing where its data came from.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402 (backend must be set first)
import numpy as np  # noqa: E402

from .schema import (  # noqa: E402
    SchemaError,
    TRACE_COLUMNS,
    read_aggregate_json,
    read_csv,
    require_columns,
)

__all__ = ["FigureSpec", "RenderResult", "render",
           "envelope_upper", "envelope_lower"]

KINDS = ("scaling", "trajectory", "phases", "win-rate")


def envelope_upper(n: int) -> float:
    """Ceiling the undecided count stays under for admissible k: n/2."""
    return n / 2.0


def envelope_lower(n: int, x_max) -> np.ndarray | float:
    """Floor of the undecided count once it has ramped up:
    (n - x_max)/2 - 8*sqrt(n*ln n)."""
    return (n - np.asarray(x_max, dtype=float)) / 2.0 - 8.0 * math.sqrt(
        n * math.log(n)
    )


@dataclass(frozen=True)
class FigureSpec:
    """What to render: inputs, kind, output path, axis options."""

    inputs: tuple[str, ...]
    kind: str
    out: str
    logx: bool = False
    logy: bool = False
    title: str | None = None
    trial: int | None = None  # trajectory: which trial to draw (default first)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")
        if not self.inputs:
            raise ValueError("need at least one input path")


@dataclass
class RenderResult:
    path: Path
    figure: object
    caption: str


def _fit_loglog(x, y) -> tuple[float, float]:
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    slope, intercept = np.polyfit(lx, ly, 1)
    return float(slope), float(intercept)


def _caption_for(spec: FigureSpec, meta: dict | None) -> str:
    if meta is not None:
        echo = {k: meta["spec"].get(k) for k in
                ("n", "k", "init_kind", "trials", "master_seed", "alpha")}
        src = f"spec {json.dumps(echo, sort_keys=True)}"
    else:
        src = "inputs " + ", ".join(Path(p).name for p in spec.inputs)
    return f"{src}"


def _render_scaling(spec: FigureSpec, ax) -> str:
    rows = read_csv(spec.inputs[0])
    require_columns(rows, ("n", "k", "mean_total_interactions"), spec.inputs[0])
    rows = [r for r in rows if not r.get("error")]
    if len(rows) < 2:
        raise SchemaError("scaling figure needs at least two sweep rows")
    slope = None
    for n in sorted({r["n"] for r in rows}):
        sub = sorted((r for r in rows if r["n"] == n), key=lambda r: r["k"])
        ks = [r["k"] for r in sub]
        ys = [r["mean_total_interactions"] for r in sub]
        ax.plot(ks, ys, "o-", label=f"n={n}")
        if len(sub) >= 2:
            slope, _ = _fit_loglog(ks, ys)
    ax.set_xscale("log")
    ax.set_yscale("log")
    ax.set_xlabel("opinions k")
    ax.set_ylabel("mean interactions to consensus")
    ax.legend()
    note = f"fitted slope {slope:.2f}" if slope is not None else ""
    if note:
        ax.annotate(note, xy=(0.05, 0.92), xycoords="axes fraction")
    return note


def _render_trajectory(spec: FigureSpec, ax) -> str:
    rows = read_csv(spec.inputs[0])
    require_columns(rows, TRACE_COLUMNS, spec.inputs[0])
    meta = None
    for p in spec.inputs[1:]:
        if str(p).endswith(".json"):
            meta = read_aggregate_json(p)
    if meta is None:
        raise SchemaError("trajectory figure needs the aggregate JSON "
                          "(for the population size) as a second input")
    n = meta["spec"]["n"]
    trial = spec.trial if spec.trial is not None else rows[0]["trial_id"]
    rows = [r for r in rows if r["trial_id"] == trial]
    if not rows:
        raise SchemaError(f"no trace rows for trial {trial}")
    t = np.array([r["t"] for r in rows], dtype=float)
    u = np.array([r["u"] for r in rows], dtype=float)
    x_max = np.array([r["x_max"] for r in rows], dtype=float)
    ax.plot(t, u, label="u(t)", color="tab:blue")
    ax.axhline(envelope_upper(n), color="tab:red", linestyle="--",
               label="n/2 ceiling")
    lower = envelope_lower(n, x_max)
    ax.plot(t, lower, color="tab:green", linestyle=":",
            label="(n-x_max)/2 - 8*sqrt(n ln n)")
    # T1: first sampled time with u >= (n - x_max)/2
    ramped = np.nonzero(2 * u >= n - x_max)[0]
    if len(ramped):
        ax.axvline(t[ramped[0]], color="gray", linewidth=0.8, label="T1 (sampled)")
    ax.set_xlabel("interactions t")
    ax.set_ylabel("undecided agents")
    ax.legend(fontsize=8)
    return f"trial {trial}, n={n}"


def _render_phases(spec: FigureSpec, ax) -> str:
    rows = read_csv(spec.inputs[0])
    require_columns(rows, ("trial_id", "t1", "t2", "t3", "t4", "t5"),
                    spec.inputs[0])
    names = ("t1", "t2", "t3", "t4", "t5")
    colors = plt.get_cmap("viridis")(np.linspace(0.2, 0.9, 5))
    for y, r in enumerate(rows):
        start = 0
        for m, name in enumerate(names):
            end = r[name]
            if end is None:
                continue
            ax.barh(y, end - start, left=start, height=0.8,
                    color=colors[m], edgecolor="none",
                    label=name if y == 0 else None)
            start = end
    ax.set_xlabel("interactions")
    ax.set_ylabel("trial")
    ax.legend(fontsize=8, ncol=5)
    return f"{len(rows)} trials"


def _render_win_rate(spec: FigureSpec, ax) -> str:
    rows = read_csv(spec.inputs[0])
    require_columns(rows, ("trial_id", "winner"), spec.inputs[0])
    winners = [r["winner"] for r in rows]
    ks = sorted({w for w in winners if w is not None})
    counts = [sum(1 for w in winners if w == k) for k in ks]
    none_count = sum(1 for w in winners if w is None)
    labels = [str(k) for k in ks]
    if none_count:
        labels.append("none")
        counts.append(none_count)
    ax.bar(labels, [c / len(rows) for c in counts], color="tab:blue")
    ax.set_xlabel("winning opinion")
    ax.set_ylabel("fraction of trials")
    ax.set_ylim(0, 1)
    return f"{len(rows)} trials"


_RENDERERS = {
    "scaling": _render_scaling,
    "trajectory": _render_trajectory,
    "phases": _render_phases,
    "win-rate": _render_win_rate,
}


def render(spec: FigureSpec) -> RenderResult:
    """Render one figure to ``spec.out``; errors leave no file behind.

    Returns the written path, the matplotlib figure (tests inspect overlay
    data through it), and the caption text.
    """
    meta = None
    for p in spec.inputs:
        if str(p).endswith(".json"):
            meta = read_aggregate_json(p)
    fig, ax = plt.subplots(figsize=(7, 4.5), constrained_layout=True)
    try:
        note = _RENDERERS[spec.kind](spec, ax)
    except Exception:
        plt.close(fig)
        raise
    if spec.logx:
        ax.set_xscale("log")
    if spec.logy:
        ax.set_yscale("log")
    if spec.title:
        ax.set_title(spec.title)
    caption = _caption_for(spec, meta)
    if note:
        caption = f"{note} | {caption}"
    fig.text(0.01, 0.01, caption, fontsize=6, color="gray")
    out = Path(spec.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    metadata = None
    if out.suffix.lower() == ".png":
        metadata = {"Title": f"{spec.kind} figure", "Description": caption}
    fig.savefig(out, dpi=120, metadata=metadata)
    plt.close(fig)
    return RenderResult(path=out, figure=fig, caption=caption)
