"""Independent validators: forward reachability, grid dynamic programming,
direct constraint evaluation and lattice operations.

The reachable-interval oracle deliberately re-implements the one-step
envelope in plain Python (no shared kernels) so that agreement with
:func:`speedplan.tightening.compute_zy` is a meaningful cross-check.
"""

from dataclasses import dataclass
import math

import numpy as np

from . import _kernels as K
from .errors import DPFailure, InvalidArgumentError, InvalidParameterError
from .model import force_profile, objective
from .tightening import compute_zy


# ---------------------------------------------------------------------------
# forward reachable intervals


@dataclass(frozen=True)
class ReachableIntervals:
    """Per-position ``[a_i, b_i]``; entries after ``empty_index`` are NaN."""

    a: np.ndarray
    b: np.ndarray
    feasible: bool
    empty_index: int = None  # 1-based first empty position, if any


def _ell_plain(w, h, gamma, g, mu, p_max, m):
    if w <= 0.0:
        return h * g * mu
    return (1.0 - h * gamma) * w + h * min(p_max / (m * math.sqrt(w)), g * mu)


def reachable_intervals(instance, free_final=False):
    """Propagate ``[a, b]`` forward, intersecting with the speed-limit box.

    Feasible iff no interval empties and, in with-final mode, ``w_fin`` lies
    in the last interval.  Assumes the upper one-step map is increasing so
    the image of an interval is an interval.
    """
    p = instance.vehicle
    h = instance.h
    n = instance.n
    a = [math.nan] * n
    b = [math.nan] * n
    a[0] = b[0] = instance.w_init
    for i in range(n - 1):
        load = p.g * (math.sin(float(instance.alpha[i])) + p.c)
        lo = (1.0 - h * p.gamma) * a[i] - h * (load + p.g * p.mu)
        hi = _ell_plain(b[i], h, p.gamma, p.g, p.mu, p.P_max, p.M) - h * load
        a[i + 1] = max(lo, 0.0)
        b[i + 1] = min(hi, float(instance.w_max[i + 1]))
        if a[i + 1] > b[i + 1]:
            return ReachableIntervals(np.array(a), np.array(b), False, empty_index=i + 2)
    feasible = free_final or a[-1] <= instance.w_fin <= b[-1]
    return ReachableIntervals(np.array(a), np.array(b), bool(feasible))


# ---------------------------------------------------------------------------
# direct constraint evaluation


@dataclass(frozen=True)
class PointCheck:
    ok: bool
    constraint: str = None
    index: int = None  # 1-based position (stage index for force constraints)
    amount: float = 0.0

    def __bool__(self):
        return self.ok


def is_feasible_point(w, instance, tol=1e-9, free_final=False):
    """Evaluate every model constraint at ``w`` and report the first violation.

    Checks boundary values, ``0 <= w_i <= w^max_i``, ``|f_i| <= g mu`` and
    ``f_i <= P_max / (M sqrt w_i)``, each with absolute tolerance ``tol``.
    Violations are reported in position order.
    """
    w = np.asarray(w, dtype=float)
    if w.shape != (instance.n,):
        return PointCheck(False, "length", None, float(abs(w.size - instance.n)))
    if not np.all(np.isfinite(w)):
        return PointCheck(False, "finite", int(np.flatnonzero(~np.isfinite(w))[0]) + 1, math.inf)
    p = instance.vehicle
    gmu = p.g * p.mu
    if abs(w[0] - instance.w_init) > tol:
        return PointCheck(False, "boundary_init", 1, abs(w[0] - instance.w_init))
    f = force_profile(w, instance)
    for i in range(instance.n):
        if w[i] > instance.w_max[i] + tol:
            return PointCheck(False, "box_upper", i + 1, w[i] - instance.w_max[i])
        if w[i] < -tol:
            return PointCheck(False, "box_lower", i + 1, -w[i])
        if i == instance.n - 1:
            break
        if f[i] > gmu + tol:
            return PointCheck(False, "force_max", i + 1, f[i] - gmu)
        if f[i] < -gmu - tol:
            return PointCheck(False, "force_min", i + 1, -gmu - f[i])
        if w[i] > 0:
            cap = p.P_max / (p.M * math.sqrt(w[i]))
            if f[i] > cap + tol:
                return PointCheck(False, "power", i + 1, f[i] - cap)
    if not free_final and abs(w[-1] - instance.w_fin) > tol:
        return PointCheck(False, "boundary_final", instance.n, abs(w[-1] - instance.w_fin))
    return PointCheck(True)


def meet_join(w, w2):
    """Componentwise ``(min, max)`` of two profiles."""
    w = np.asarray(w, dtype=float)
    w2 = np.asarray(w2, dtype=float)
    if w.shape != w2.shape:
        raise InvalidArgumentError("profiles must have equal length")
    return np.minimum(w, w2), np.maximum(w, w2)


def lattice_profiles(instance, count=3, rng=None, envelopes=None):
    """Feasible profiles for lattice tests: ``z``, ``y`` and ``count``
    optimal profiles of randomly re-weighted objectives."""
    from .relaxation import plan

    rng = np.random.default_rng(rng)
    verdict = envelopes or compute_zy(instance)
    if not verdict.feasible:
        raise InvalidArgumentError("instance is infeasible")
    out = [verdict.z.copy(), verdict.y.copy()]
    for _ in range(count):
        lam = float(rng.choice([0.0, rng.uniform(0.0, 2e-4), rng.uniform(2e-4, 2e-3)]))
        rep = plan(instance.replace(lam=lam, eta=float(rng.uniform(0.0, 1.0))))
        if rep.status == "exact":
            out.append(rep.profile.w)
    return out


# ---------------------------------------------------------------------------
# dynamic programming on a speed grid


@dataclass
class GridPolicy:
    """Best grid-feasible profile and its cost; ``levels`` is padded to
    ``grid_levels`` columns with ``counts`` valid entries per position."""

    levels: np.ndarray
    counts: np.ndarray
    value: np.ndarray
    policy: np.ndarray
    profile: np.ndarray
    objective: float
    energy_term: float
    time_term: float
    grid_error_bound: float
    grid_step: np.ndarray


def _grid(y, z, grid_levels, collapse=1e-12):
    n = y.shape[0]
    levels = np.full((n, grid_levels), np.inf)
    counts = np.empty(n, dtype=np.int64)
    for i in range(n):
        if z[i] - y[i] <= collapse * max(1.0, abs(z[i])):
            levels[i, 0] = z[i]
            counts[i] = 1
        else:
            levels[i] = np.linspace(y[i], z[i], grid_levels)
            counts[i] = grid_levels
    return levels, counts


def grid_error_bound(instance, y, step):
    """Cost change from moving each ``w_i`` by one grid step.

    Stage ``i`` depends on ``w_i`` through ``h / sqrt(w_i)`` (slope at most
    ``h / (2 y_i^1.5)``) and through ``f_i``; the energy term moves by at most
    ``lam M (|1 - h gamma| + 1)`` per unit change of the two endpoints.
    """
    h = instance.h
    lam_m = instance.lam * instance.vehicle.M
    a = abs(1.0 - h * instance.vehicle.gamma)
    total = 0.0
    for i in range(instance.n - 1):
        slope_t = h / (2.0 * y[i] ** 1.5) if y[i] > 0 else math.inf
        total += (slope_t + lam_m * a) * step[i] + lam_m * step[i + 1]
    return total


def dp_optimize(instance, grid_levels, envelopes=None, tol=1e-12):
    """Grid dynamic program over ``[y_i, z_i]`` with exact transitions.

    A transition is admissible when its force satisfies friction and power
    limits up to ``tol * (1 + |w|)``; no discretization slack is added, so
    the returned profile is feasible to that tolerance and its cost is an
    upper estimate of the continuous optimum.  Raises :class:`DPFailure`
    with the 1-based blocking position when no grid path exists.
    """
    if int(grid_levels) < 2:
        raise InvalidParameterError("grid_levels must be >= 2")
    grid_levels = int(grid_levels)
    verdict = envelopes or compute_zy(instance)
    if not verdict.feasible:
        raise InvalidArgumentError("instance is infeasible")
    y, z = np.asarray(verdict.y, float), np.asarray(verdict.z, float)
    levels, counts = _grid(y, z, grid_levels)
    step = np.where(counts > 1, (z - y) / np.maximum(counts - 1, 1), 0.0)
    p = instance.vehicle
    scale_tol = tol * (1.0 + float(np.max(z)))
    value, policy = K.dp_backward(levels, counts, np.ascontiguousarray(instance.grade), instance.h,
                                  p.gamma, p.g * p.mu, p.P_max / p.M, instance.lam * p.M,
                                  instance.eta, scale_tol)
    if not np.isfinite(value[0, 0]):
        dead = [i for i in range(instance.n) if not np.any(np.isfinite(value[i, : counts[i]]))]
        stage = max(dead) + 1
        raise DPFailure(f"no grid-feasible transition out of position {stage}", stage=stage)
    prof = np.empty(instance.n)
    k = 0
    for i in range(instance.n):
        prof[i] = levels[i, k]
        if i < instance.n - 1:
            k = int(policy[i, k])
    obj = objective(prof, force_profile(prof, instance), instance)
    return GridPolicy(levels=levels, counts=counts, value=value, policy=policy, profile=prof,
                      objective=obj["total"], energy_term=obj["energy_term"],
                      time_term=obj["time_term"],
                      grid_error_bound=grid_error_bound(instance, y, step), grid_step=step)
