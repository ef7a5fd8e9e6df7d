"""Offline figure rendering for undecided-state-dynamics experiment outputs."""

__version__ = "0.1.0"

from .figures import FigureSpec, envelope_lower, envelope_upper, render  # noqa: F401
from .schema import SchemaError, read_aggregate_json, read_csv  # noqa: F401
