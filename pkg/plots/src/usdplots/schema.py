"""Readers for the simulator's output file schemas.

The plotting package deliberately has no code dependency on the simulator;
it consumes only the documented CSV/JSON files:

  trials CSV   header: trial_id,seed,n,k,init_kind,beta,ratio,u0,
               total_interactions,t1,t2,t3,t4,t5,winner,
               winner_was_initial_plurality,max_u,min_u_post_t1,
               envelope_violations
  trace CSV    header: trial_id,t,u,x_max,max_index,z_alpha,additive_bias,
               multiplicative_bias,significant_count
  sweep CSV    header: n,k,init_kind,...,mean_total_interactions,...
  aggregate JSON  {"spec": {...}, "aggregate": {...}, "version": ..,
                   "build": ..}

Empty cells decode to None; numbers decode to int when they round-trip.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

__all__ = [
    "SchemaError",
    "read_csv",
    "require_columns",
    "read_aggregate_json",
    "TRIALS_COLUMNS",
    "TRACE_COLUMNS",
]

TRIALS_COLUMNS = (
    "trial_id", "seed", "n", "k", "init_kind", "beta", "ratio", "u0",
    "total_interactions", "t1", "t2", "t3", "t4", "t5", "winner",
    "winner_was_initial_plurality", "max_u", "min_u_post_t1",
    "envelope_violations",
)

TRACE_COLUMNS = (
    "trial_id", "t", "u", "x_max", "max_index", "z_alpha",
    "additive_bias", "multiplicative_bias", "significant_count",
)


class SchemaError(ValueError):
    """Input file does not match the documented schema."""


def _decode(cell: str):
    if cell == "":
        return None
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def read_csv(path: str | Path) -> list[dict]:
    """Read one simulator CSV into a list of typed row dicts."""
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input {path} does not exist")
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames is None:
            raise SchemaError(f"{path} has no header row")
        rows = [{k: _decode(v) for k, v in row.items()} for row in reader]
    if not rows:
        raise SchemaError(f"{path} contains a header but no data rows")
    return rows


def require_columns(rows: list[dict], columns, path="input") -> None:
    missing = [c for c in columns if c not in rows[0]]
    if missing:
        raise SchemaError(f"{path} is missing columns: {', '.join(missing)}")


def read_aggregate_json(path: str | Path) -> dict:
    path = Path(path)
    if not path.exists():
        raise SchemaError(f"input {path} does not exist")
    doc = json.loads(path.read_text())
    if "spec" not in doc:
        raise SchemaError(f"{path} is not an aggregate document (no spec echo)")
    return doc
