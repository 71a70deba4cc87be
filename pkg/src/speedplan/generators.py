"""Reference fixtures and seeded random instance families."""

import math

import numpy as np

from . import _kernels as K
from .model import TrackInstance, VehicleParams, check_assumptions, critical_speed


def reference_vehicle():
    return VehicleParams(M=1200.0, P_max=60000.0, mu=0.8, c=0.01, gamma=4e-4, g=9.81)


def reference_instance(lam=0.0, eta=0.0):
    """Three positions, flat, 16 -> ? -> 16 with a loose middle limit."""
    return TrackInstance(h=1.0, alpha=[0.0, 0.0], w_max=[16.0, 100.0, 16.0], w_init=16.0,
                         w_fin=16.0, vehicle=reference_vehicle(), lam=lam, eta=eta)


def unreachable_instance():
    """Two positions: 1 m^2/s^2 cannot become 100 m^2/s^2 in one metre."""
    return TrackInstance(h=1.0, alpha=[0.0], w_max=[1.0, 100.0], w_init=1.0, w_fin=100.0,
                         vehicle=reference_vehicle())


def forward_reach(alpha, w_max, w_init, h, vehicle, lower=None):
    """Forward-reachable interval per position inside ``[lower, w_max]``.

    Returns ``(a, b)``; an empty position has ``a > b`` and everything after
    it is NaN.  Position n uses ``w_max[n-1]`` as its upper limit.
    """
    n = len(w_max)
    gmu = vehicle.g * vehicle.mu
    pm = vehicle.P_max / vehicle.M
    wbar = critical_speed(vehicle)
    grade = vehicle.g * (np.sin(alpha) + vehicle.c)
    lower = np.zeros(n) if lower is None else lower
    a = np.full(n, np.nan)
    b = np.full(n, np.nan)
    a[0] = b[0] = w_init
    for i in range(n - 1):
        lo = (1 - h * vehicle.gamma) * a[i] - h * (grade[i] + gmu)
        hi = K.ell(b[i], h, vehicle.gamma, gmu, pm, wbar) - h * grade[i]
        a[i + 1] = max(lo, lower[i + 1])
        b[i + 1] = min(hi, w_max[i + 1])
        if a[i + 1] > b[i + 1]:
            break
    return a, b


def random_vehicle(rng):
    return VehicleParams(
        M=rng.uniform(1000.0, 1800.0),
        P_max=rng.uniform(50e3, 120e3),
        mu=rng.uniform(0.6, 1.0),
        c=rng.uniform(0.005, 0.015),
        gamma=rng.uniform(2e-4, 6e-4),
    )


def _limit_walk(rng, n, floor, ceil):
    level = rng.uniform(max(floor, 150.0), ceil)
    steps = rng.normal(0.0, 25.0, size=n)
    walk = np.clip(level + np.cumsum(steps), floor, ceil)
    return walk


def random_instance(rng, n, feasible=True, max_tries=200, require_assumptions=True, lam=None,
                    eta=None, slope=0.06):
    """Random track with slopes in ``[-slope, slope]`` and a smooth speed-limit walk.

    ``feasible`` = True / False / None (None mixes both).  Feasible instances
    draw ``w_fin`` inside the forward-reachable interval at the last position;
    infeasible ones place it above that interval.  With
    ``require_assumptions`` the draw is repeated until A1-A3 hold.
    """
    for _ in range(max_tries):
        veh = random_vehicle(rng)
        h = rng.uniform(0.5, 2.0)
        alpha = rng.uniform(-slope, slope, size=n - 1)
        w_init = rng.uniform(5.0, 150.0)
        w_max = _limit_walk(rng, n, w_init, 900.0)
        w_max[0] = max(w_max[0], w_init)
        lam_v = (0.0 if rng.random() < 0.25 else rng.uniform(0.0, 3e-4)) if lam is None else lam
        eta_v = rng.uniform(0.0, 1.0) if eta is None else eta
        a, b = forward_reach(alpha, w_max, w_init, h, veh)
        if np.isnan(b[-1]) or a[-1] > b[-1]:
            continue
        want = feasible if feasible is not None else bool(rng.random() < 0.5)
        if want:
            w_fin = a[-1] + rng.uniform(0.02, 0.98) * (b[-1] - a[-1])
        else:
            w_fin = b[-1] + rng.uniform(0.5, 50.0)
            w_max[-1] = max(w_max[-1], w_fin)
        inst = TrackInstance(h=h, alpha=alpha, w_max=w_max, w_init=w_init, w_fin=w_fin,
                             vehicle=veh, lam=lam_v, eta=eta_v)
        if require_assumptions and not check_assumptions(inst).all_hold:
            continue
        return inst
    raise RuntimeError("could not draw an instance satisfying the requested properties")


def hard_final_instance(rng=None, n=40, lam=2e-3, eta=0.0, fraction=0.97):
    """A terminal speed demand that the untightened relaxation meets by cheating.

    Flat road with a generous limit, a strong energy weight (so cruising slowly
    is attractive) and ``w_fin`` placed at ``fraction`` of the way to the
    largest reachable terminal value.  The untightened relaxation violates the
    last few power identities; the tightened one is exact.
    """
    rng = np.random.default_rng(rng)
    veh = reference_vehicle()
    h = 1.0
    alpha = rng.uniform(-0.01, 0.01, size=n - 1)
    w_init = rng.uniform(40.0, 80.0)
    w_max = np.full(n, 900.0)
    a, b = forward_reach(alpha, w_max, w_init, h, veh)
    w_fin = a[-1] + fraction * (b[-1] - a[-1])
    return TrackInstance(h=h, alpha=alpha, w_max=w_max, w_init=w_init, w_fin=w_fin,
                         vehicle=veh, lam=lam, eta=eta)
