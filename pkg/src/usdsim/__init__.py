"""Simulator and verification toolkit for k-opinion undecided-state dynamics.

The package simulates the sequential pairwise-interaction process at scale,
detects its phase structure online, and cross-validates every closed-form
quantity against brute-force enumeration on small instances.
"""

__version__ = "0.1.0"

from .core import (  # noqa: F401
    UNDECIDED,
    BiasSummary,
    BoundComparison,
    ClassificationThresholds,
    Configuration,
    OpinionLabels,
    TransitionProbs,
    apply_interaction,
    bias_summary,
    bound_comparison,
    classify_opinions,
    monochromatic_distance,
    opinion_probs,
    pair_diff_probs,
    potential_z,
    transition_probs,
    u_star,
)
from .engine import (  # noqa: F401
    InteractionEvent,
    RunResult,
    StopReason,
    run_until,
    sample_productive_step,
    sample_step,
)
from .harness import ExperimentSpec, make_initial, run_trials, sweep  # noqa: F401
from .phases import PhaseReport, PhaseTracker, TraceSample, phase_predicates  # noqa: F401
from .rng import Xoshiro256  # noqa: F401
