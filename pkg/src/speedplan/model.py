"""Vehicle and track data, derived quantities and objective evaluation.

Speeds are carried as the per-unit-mass kinetic energy ``w = v**2 / 2``
(m^2/s^2).  Positions are indexed 0..n-1 internally; user-facing reports
(witness indices, violated constraints) use 1-based positions so that they
line up with the usual i = 1..n numbering of the discretized model.
"""

from dataclasses import dataclass, field
import math

import numpy as np

from .errors import DomainError, InvalidArgumentError, InvalidParameterError

G_STANDARD = 9.81


def _finite(name, value):
    value = float(value)
    if not math.isfinite(value):
        raise InvalidParameterError(f"{name} must be finite, got {value!r}")
    return value


def derive_gamma(rho, A_f, c_d, M):
    """Normalized drag coefficient ``rho * A_f * c_d / (2 M)`` in 1/m."""
    rho, A_f, c_d, M = (_finite(k, v) for k, v in (("rho", rho), ("A_f", A_f), ("c_d", c_d), ("M", M)))
    if M <= 0:
        raise InvalidParameterError("M must be > 0")
    if rho < 0 or A_f < 0 or c_d < 0:
        raise InvalidParameterError("rho, A_f and c_d must be >= 0")
    return rho * A_f * c_d / (2.0 * M)


@dataclass(frozen=True)
class VehicleParams:
    M: float
    P_max: float
    mu: float
    c: float
    gamma: float
    g: float = G_STANDARD

    def __post_init__(self):
        for name in ("M", "P_max", "mu", "c", "gamma", "g"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        for name in ("M", "P_max", "mu", "g"):
            if getattr(self, name) <= 0:
                raise InvalidParameterError(f"{name} must be > 0")
        if self.c < 0 or self.gamma < 0:
            raise InvalidParameterError("c and gamma must be >= 0")

    @classmethod
    def from_drag(cls, M, P_max, mu, c, rho, A_f, c_d, g=G_STANDARD):
        return cls(M=M, P_max=P_max, mu=mu, c=c, gamma=derive_gamma(rho, A_f, c_d, M), g=g)

    @property
    def power_per_mass(self):
        return self.P_max / self.M

    @property
    def friction_accel(self):
        return self.g * self.mu


def critical_speed(params):
    """The ``w`` where the power bound ``P_max/(M sqrt(w))`` meets ``g mu``."""
    return (params.P_max / (params.M * params.g * params.mu)) ** 2


def _frozen_array(values, name, length=None):
    arr = np.array(values, dtype=float)
    if arr.ndim != 1:
        raise InvalidArgumentError(f"{name} must be one-dimensional")
    if length is not None and arr.shape[0] != length:
        raise InvalidArgumentError(f"{name} has length {arr.shape[0]}, expected {length}")
    if not np.all(np.isfinite(arr)):
        raise InvalidParameterError(f"{name} must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class TrackInstance:
    """A discretized path with limits, boundary conditions and weights.

    ``alpha`` holds one slope per step (length n-1), ``w_max`` one limit per
    position (length n).
    """

    h: float
    alpha: np.ndarray
    w_max: np.ndarray
    w_init: float
    w_fin: float
    vehicle: VehicleParams
    lam: float = 0.0
    eta: float = 0.0
    n: int = field(init=False)

    def __post_init__(self):
        w_max = _frozen_array(self.w_max, "w_max")
        n = w_max.shape[0]
        if n < 2:
            raise InvalidArgumentError("need at least two positions")
        alpha = _frozen_array(self.alpha, "alpha", n - 1)
        object.__setattr__(self, "w_max", w_max)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "n", n)
        for name in ("h", "w_init", "w_fin", "lam", "eta"):
            object.__setattr__(self, name, _finite(name, getattr(self, name)))
        if self.h <= 0:
            raise InvalidParameterError("h must be > 0")
        if np.any(w_max <= 0):
            raise InvalidParameterError("w_max entries must be > 0")
        if np.any(np.abs(alpha) >= math.pi / 2):
            raise InvalidParameterError("slopes must satisfy |alpha| < pi/2")
        if self.w_init <= 0:
            raise InvalidParameterError("w_init must be > 0")
        if self.w_fin < 0:
            raise InvalidParameterError("w_fin must be >= 0")
        if self.w_init > w_max[0] or self.w_fin > w_max[-1]:
            raise InvalidParameterError("boundary values exceed the speed limits at the endpoints")
        if self.lam < 0:
            raise InvalidParameterError("lambda must be >= 0")
        if not 0.0 <= self.eta <= 1.0:
            raise InvalidParameterError("eta must lie in [0, 1]")

    @property
    def grade(self):
        """Per-step constant load ``g (sin alpha_i + c)`` in m/s^2."""
        v = self.vehicle
        return v.g * (np.sin(self.alpha) + v.c)

    def upper_limits(self, free_final=False):
        """Effective ``w^max`` with boundary entries pinned."""
        u = self.w_max.copy()
        u[0] = self.w_init
        if not free_final:
            u[-1] = self.w_fin
        return u

    def lower_limits(self, free_final=False):
        """Effective ``w^min``: zero inside, boundary values at the ends."""
        l = np.zeros(self.n)
        l[0] = self.w_init
        if not free_final:
            l[-1] = self.w_fin
        return l

    def replace(self, **changes):
        kwargs = dict(h=self.h, alpha=self.alpha, w_max=self.w_max, w_init=self.w_init,
                      w_fin=self.w_fin, vehicle=self.vehicle, lam=self.lam, eta=self.eta)
        kwargs.update(changes)
        return TrackInstance(**kwargs)


@dataclass(frozen=True)
class AssumptionReport:
    critical_speed: float
    a1_holds: bool
    a2_holds: bool
    a3_holds: bool
    a1_slack: float
    a2_slack: float
    a3_slack: float
    index_set_I: tuple
    a1_denominator_invalid: bool = False
    a2_undefined_at: tuple = ()

    @property
    def all_hold(self):
        return self.a1_holds and self.a2_holds and self.a3_holds

    def to_dict(self):
        def num(x):
            return x if math.isfinite(x) else None

        return {
            "critical_speed": self.critical_speed,
            "a1": {"holds": self.a1_holds, "slack": num(self.a1_slack),
                   "denominator_invalid": self.a1_denominator_invalid},
            "a2": {"holds": self.a2_holds, "slack": num(self.a2_slack),
                   "index_set_I": list(self.index_set_I), "undefined_at": list(self.a2_undefined_at)},
            "a3": {"holds": self.a3_holds, "slack": num(self.a3_slack)},
        }


def assumption3_slack(h, params):
    wbar = critical_speed(params)
    return 1.0 - h * params.gamma - h * params.P_max / (2.0 * params.M * wbar**1.5)


def check_assumptions(instance):
    """Evaluate the three sufficient conditions and their signed margins.

    A1 is a strict inequality and holds only for a positive slack; A2 and
    A3 hold for nonnegative slack.  A2 ranges over positions 1..n-1 (the
    ones that carry a slope) whose effective limit exceeds the critical
    speed; an empty set makes it vacuous.
    """
    p = instance.vehicle
    h, gam, g, c = instance.h, p.gamma, p.g, p.c
    wbar = critical_speed(p)

    denom = instance.lam * gam * p.P_max * h + 1.0 - instance.lam
    lhs1 = (1.0 - h * gam) * wbar - h * g * (1.0 + c)
    if denom <= 0:
        a1_slack, a1_bad = -math.inf, True
    else:
        a1_slack, a1_bad = lhs1 - (p.P_max * h / (2.0 * p.M * denom)) ** (2.0 / 3.0), False
    a1_holds = a1_slack > 0

    upper = instance.upper_limits()
    index_set = tuple(int(i) + 1 for i in np.flatnonzero(upper[:-1] > wbar))
    slack2 = math.inf
    undefined = []
    one_minus = 1.0 - h * gam
    for pos in index_set:
        load = g * (math.sin(instance.alpha[pos - 1]) + c)
        shifted = wbar + h * load
        if shifted <= 0 or one_minus <= 0:
            undefined.append(pos)
            slack2 = -math.inf
            continue
        val = (p.P_max / p.M) * math.sqrt(one_minus / shifted) - gam / one_minus * shifted - load
        slack2 = min(slack2, val)
    a2_holds = slack2 >= 0

    a3_slack = assumption3_slack(h, p)
    return AssumptionReport(
        critical_speed=wbar,
        a1_holds=bool(a1_holds), a2_holds=bool(a2_holds), a3_holds=bool(a3_slack >= 0),
        a1_slack=a1_slack, a2_slack=slack2, a3_slack=a3_slack,
        index_set_I=index_set, a1_denominator_invalid=a1_bad, a2_undefined_at=tuple(undefined),
    )


def force_profile(w, instance):
    """Normalized traction ``f_i = (w_{i+1}-w_i)/h + gamma w_i + g(sin a_i + c)``."""
    w = np.asarray(w, dtype=float)
    if w.shape != (instance.n,):
        raise InvalidArgumentError(f"w must have length {instance.n}")
    return np.diff(w) / instance.h + instance.vehicle.gamma * w[:-1] + instance.grade


def objective(w, f, instance):
    """Energy and travel-time terms of the weighted cost, in seconds.

    The time term keeps the ``sum h / sqrt(w_i)`` form of the optimized
    functional; with ``w = v^2/2`` physical travel time is that value divided
    by sqrt(2).
    """
    w = np.asarray(w, dtype=float)
    f = np.asarray(f, dtype=float)
    n = instance.n
    if w.shape != (n,) or f.shape != (n - 1,):
        raise InvalidArgumentError("inconsistent profile lengths")
    if np.any(w[:-1] <= 0):
        raise DomainError("w_i must be > 0 for i < n")
    h = instance.h
    energy = float(np.sum(h * instance.lam * instance.vehicle.M * np.maximum(instance.eta * f, f)))
    time = float(np.sum(h / np.sqrt(w[:-1])))
    return {"energy_term": energy, "time_term": time, "total": energy + time}
