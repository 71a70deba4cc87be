"""Exact convex speed planning with feasibility-based bound tightening."""

from ._jit import JIT_ENABLED, backend_name
from .model import (
    AssumptionReport,
    TrackInstance,
    VehicleParams,
    check_assumptions,
    critical_speed,
    derive_gamma,
    force_profile,
    objective,
)
from .io import ProfileDocument, load_track, save_track
from .oracle import dp_optimize, is_feasible_point, reachable_intervals
from .relaxation import FREE_FINAL, WITH_FINAL, assemble, plan, verify_exactness
from .tightening import BoundsVectors, FeasibilityVerdict, compute_zy, tightened_lower_bounds

__version__ = "0.1.0"
