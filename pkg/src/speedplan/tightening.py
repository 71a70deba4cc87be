"""Feasibility-based bound tightening for the discretized speed model.

Upper envelopes come from forward acceleration limits (B2) and backward
braking limits (B4); lower envelopes from the backward "minimum speed needed
to still reach the next position" map (B1) and forward braking limits (B3).
Iterating the four sweeps to a fixed point yields the componentwise maximum
``z`` and minimum ``y`` of the feasible set, or a certificate that it is
empty.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from . import _kernels as K
from .errors import (
    AssumptionViolation,
    ConvergenceError,
    DomainError,
    InvalidArgumentError,
    InvalidParameterError,
    NoSolutionError,
)
from .model import assumption3_slack, critical_speed

DEFAULT_EPS = 1e-9
DEFAULT_MAX_ITER = 10_000


def _scalars(instance):
    p = instance.vehicle
    return instance.h, p.gamma, p.g * p.mu, p.P_max / p.M, critical_speed(p)


def _require_a3(instance):
    if assumption3_slack(instance.h, instance.vehicle) < 0:
        raise AssumptionViolation(
            "ell is not guaranteed increasing for this step length (assumption 3 fails)"
        )


def ell(w, instance):
    """``(1 - h gamma) w + h min(P_max/(M sqrt w), g mu)``, for ``w > 0``."""
    w = float(w)
    if not w > 0:
        raise DomainError("ell is defined for w > 0")
    return K.ell(w, *_scalars(instance))


def ell_inverse(target, instance):
    """Unique ``w > 0`` with ``ell(w) == target``."""
    _require_a3(instance)
    h, gamma, gmu, pm, wbar = _scalars(instance)
    target = float(target)
    if not target > h * gmu:
        raise NoSolutionError(f"target {target} <= h*g*mu = {h * gmu}: no positive root")
    return K.ell_inv(target, h, gamma, gmu, pm, wbar)


def xi1(w_next, lower_floor, alpha_i, instance):
    """Smallest admissible ``w_i >= lower_floor`` that can still reach ``w_next``."""
    _require_a3(instance)
    if lower_floor < 0:
        raise InvalidParameterError("lower_floor must be >= 0")
    p = instance.vehicle
    grade = p.g * (math.sin(alpha_i) + p.c)
    return K.xi1(float(w_next), float(lower_floor), grade, *_scalars(instance))


def xi2(w_prev, upper_cap, alpha_i, instance):
    if not w_prev > 0:
        raise DomainError("xi2 needs w_prev > 0")
    p = instance.vehicle
    grade = p.g * (math.sin(alpha_i) + p.c)
    return K.xi2(float(w_prev), float(upper_cap), grade, *_scalars(instance))


def xi3(w_prev, lower_floor, alpha_i, instance):
    p = instance.vehicle
    grade = p.g * (math.sin(alpha_i) + p.c)
    return K.xi3(float(w_prev), float(lower_floor), grade, instance.h, p.gamma, p.g * p.mu)


def xi4(w_next, upper_cap, alpha_i, instance):
    p = instance.vehicle
    if 1.0 - instance.h * p.gamma <= 0:
        raise InvalidParameterError("1 - h*gamma must be > 0")
    grade = p.g * (math.sin(alpha_i) + p.c)
    return K.xi4(float(w_next), float(upper_cap), grade, instance.h, p.gamma, p.g * p.mu)


def sweep(kind, bounds_in, instance):
    """Apply one of the four sweeps ``"B1"``..``"B4"`` to a length-n vector."""
    b = np.ascontiguousarray(bounds_in, dtype=float)
    if b.shape != (instance.n,):
        raise InvalidArgumentError(f"bounds must have length {instance.n}")
    h, gamma, gmu, pm, wbar = _scalars(instance)
    grade = np.ascontiguousarray(instance.grade)
    if kind in ("B1", "B2"):
        _require_a3(instance)
    if kind in ("B3", "B4") and 1.0 - h * gamma <= 0:
        raise InvalidParameterError("1 - h*gamma must be > 0")
    if kind == "B1":
        return K.sweep_b1(b, grade, h, gamma, gmu, pm, wbar)
    if kind == "B2":
        return K.sweep_b2(b, grade, h, gamma, gmu, pm, wbar)
    if kind == "B3":
        return K.sweep_b3(b, grade, h, gamma, gmu)
    if kind == "B4":
        return K.sweep_b4(b, grade, h, gamma, gmu)
    raise InvalidArgumentError(f"unknown sweep {kind!r}")


@dataclass(frozen=True)
class BoundsVectors:
    l: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        l = np.array(self.l, dtype=float)
        u = np.array(self.u, dtype=float)
        if l.shape != u.shape or l.ndim != 1:
            raise InvalidArgumentError("l and u must be equal-length vectors")
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "u", u)

    @property
    def consistent(self):
        return bool(np.all(self.l <= self.u))


@dataclass(frozen=True)
class InfeasibleAt:
    """The lower-bound recursion exceeded ``w_max`` at 1-based ``index``."""

    index: int
    l: np.ndarray


def tightened_lower_bounds(instance, free_final=False):
    """Backward recursion ``l_n = w_fin, l_j = xi1(l_{j+1})`` with floors ``w^min``.

    Returns the vector, or :class:`InfeasibleAt` with the smallest index where
    it exceeds the speed limit.
    """
    lower = instance.lower_limits(free_final)
    l = sweep("B1", lower, instance)
    over = np.flatnonzero(l > instance.upper_limits(free_final))
    if over.size:
        return InfeasibleAt(index=int(over[0]) + 1, l=l)
    return l


@dataclass(frozen=True)
class FeasibilityVerdict:
    feasible: bool
    iterations: int
    z: np.ndarray = None
    y: np.ndarray = None
    witness_index: int = None
    upper: np.ndarray = None
    lower: np.ndarray = None
    verified: bool = True
    history: list = field(default=None, repr=False, compare=False)

    @property
    def status(self):
        return "Feasible" if self.feasible else "Infeasible"

    def bounds(self):
        return BoundsVectors(l=self.y, u=self.z)


def compute_zy(instance, eps=DEFAULT_EPS, lower=None, upper=None, free_final=False,
               max_iter=DEFAULT_MAX_ITER, record_history=False, verify=True):
    """Iterate ``u <- B4(B2(u))``, ``l <- B3(B1(l))`` to the envelopes ``z, y``.

    ``lower``/``upper`` override the starting vectors (defaults: effective
    ``w^min``/``w^max``).  Stops Feasible once both max-norm changes are at
    most ``eps`` and ``u >= l``; Infeasible as soon as ``u >= l`` fails, with
    the rightmost offending 1-based position as witness (the lower envelope
    grows backwards from the terminal condition).  With
    ``record_history`` every half-step iterate is kept as
    ``(u_k, u_half, u_next, l_k, l_half, l_next)`` tuples.
    """
    if not eps > 0:
        raise InvalidParameterError("eps must be > 0")
    _require_a3(instance)
    h, gamma, gmu, pm, wbar = _scalars(instance)
    if 1.0 - h * gamma <= 0:
        raise InvalidParameterError("1 - h*gamma must be > 0")
    grade = np.ascontiguousarray(instance.grade)
    u = np.array(instance.upper_limits(free_final) if upper is None else upper, dtype=float)
    l = np.array(instance.lower_limits(free_final) if lower is None else lower, dtype=float)
    if u.shape != (instance.n,) or l.shape != (instance.n,):
        raise InvalidArgumentError("starting envelopes must have length n")
    history = [] if record_history else None

    for k in range(1, max_iter + 1):
        u_half = K.sweep_b2(u, grade, h, gamma, gmu, pm, wbar)
        u_next = K.sweep_b4(u_half, grade, h, gamma, gmu)
        l_half = K.sweep_b1(l, grade, h, gamma, gmu, pm, wbar)
        l_next = K.sweep_b3(l_half, grade, h, gamma, gmu)
        if history is not None:
            history.append((u, u_half, u_next, l, l_half, l_next))
        du = float(np.max(np.abs(u_next - u)))
        dl = float(np.max(np.abs(l_next - l)))
        crossed = np.flatnonzero(u_next < l_next)
        u, l = u_next, l_next
        if crossed.size:
            return FeasibilityVerdict(False, k, witness_index=int(crossed[-1]) + 1,
                                      upper=u, lower=l, history=history)
        if du <= eps and dl <= eps:
            ok = True
            if verify:
                ok = envelopes_satisfy_constraints(instance, u, l, tol=max(1e-9, 10 * eps),
                                                   free_final=free_final)
            return FeasibilityVerdict(True, k, z=u, y=l, upper=u, lower=l, verified=ok,
                                      history=history)
    raise ConvergenceError(f"no convergence within {max_iter} iterations", upper=u, lower=l,
                           iterations=max_iter)


def friction_power_cap(w, params):
    """``min(g mu, P_max/(M sqrt w))`` elementwise; ``g mu`` where ``w <= 0``."""
    w = np.asarray(w, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        power = np.where(w > 0, params.P_max / (params.M * np.sqrt(np.where(w > 0, w, 1.0))), np.inf)
    return np.minimum(params.g * params.mu, power)


def envelopes_satisfy_constraints(instance, z, y, tol=1e-9, free_final=False):
    """Direct check that both envelope points satisfy every model constraint."""
    p = instance.vehicle
    up = instance.upper_limits(free_final)
    lo = instance.lower_limits(free_final)
    for w in (z, y):
        if np.any(w > up + tol) or np.any(w < lo - tol):
            return False
        f = np.diff(w) / instance.h + p.gamma * w[:-1] + instance.grade
        fmax = friction_power_cap(w[:-1], p)
        if np.any(f > fmax + tol) or np.any(f < -p.g * p.mu - tol):
            return False
    return True
