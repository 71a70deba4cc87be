"""Scalar/loop kernels for the one-step bound maps, sweeps and grid DP.

Every function takes plain floats and float64 arrays so it compiles under
``numba.njit``; with the JIT disabled the same source runs as Python.
Shared scalar arguments:

    h      step length
    gamma  normalized drag
    gmu    friction acceleration g*mu
    pm     power-to-mass ratio P_max/M
    wbar   critical kinetic energy
    grade  per-step load g*(sin alpha_i + c)
"""

import math

import numpy as np

from ._jit import JIT_ENABLED, jit


@jit
def ell(w, h, gamma, gmu, pm, wbar):
    # linear branch also covers w <= 0 (continuous extension, ell(0) = h*gmu)
    if w <= wbar:
        return (1.0 - h * gamma) * w + h * gmu
    return (1.0 - h * gamma) * w + h * pm / math.sqrt(w)


@jit
def ell_inv(target, h, gamma, gmu, pm, wbar):
    """Root of ell(w) = target; caller guarantees target > h*gmu and 1-h*gamma > 0."""
    a = 1.0 - h * gamma
    if target <= a * wbar + h * gmu:
        return (target - h * gmu) / a
    lo = wbar
    hi = target / a
    w = hi
    # ell - target is convex and increasing on [wbar, inf): Newton from the
    # right descends monotonically; bisection guards flat derivatives.
    for _ in range(200):
        sw = math.sqrt(w)
        F = a * w + h * pm / sw - target
        if F == 0.0:
            return w
        if F < 0.0:
            lo = w
        else:
            hi = w
        dF = a - 0.5 * h * pm / (w * sw)
        if dF > 0.0:
            wn = w - F / dF
        else:
            wn = 0.5 * (lo + hi)
        if not (lo < wn < hi):
            wn = 0.5 * (lo + hi)
        if abs(wn - w) <= 1e-15 * max(1.0, w):
            return wn
        w = wn
    return w


@jit
def xi1(w_next, floor, grade_i, h, gamma, gmu, pm, wbar):
    target = w_next + h * grade_i
    if ell(floor, h, gamma, gmu, pm, wbar) >= target:
        return floor
    root = ell_inv(target, h, gamma, gmu, pm, wbar)
    return max(root, floor)


@jit
def xi2(w_prev, cap, grade_i, h, gamma, gmu, pm, wbar):
    return min(cap, ell(w_prev, h, gamma, gmu, pm, wbar) - h * grade_i)


@jit
def xi3(w_prev, floor, grade_i, h, gamma, gmu):
    return max(floor, (1.0 - h * gamma) * w_prev - h * (grade_i + gmu))


@jit
def xi4(w_next, cap, grade_i, h, gamma, gmu):
    return min(cap, (w_next + h * (grade_i + gmu)) / (1.0 - h * gamma))


@jit
def sweep_b1(l, grade, h, gamma, gmu, pm, wbar):
    n = l.shape[0]
    p = np.empty(n)
    p[n - 1] = l[n - 1]
    for j in range(n - 2, -1, -1):
        p[j] = xi1(p[j + 1], l[j], grade[j], h, gamma, gmu, pm, wbar)
    return p


@jit
def sweep_b2(u, grade, h, gamma, gmu, pm, wbar):
    n = u.shape[0]
    p = np.empty(n)
    p[0] = u[0]
    for j in range(n - 1):
        p[j + 1] = xi2(p[j], u[j + 1], grade[j], h, gamma, gmu, pm, wbar)
    return p


@jit
def sweep_b3(l, grade, h, gamma, gmu):
    n = l.shape[0]
    p = np.empty(n)
    p[0] = l[0]
    for j in range(n - 1):
        p[j + 1] = xi3(p[j], l[j + 1], grade[j], h, gamma, gmu)
    return p


@jit
def sweep_b4(u, grade, h, gamma, gmu):
    n = u.shape[0]
    p = np.empty(n)
    p[n - 1] = u[n - 1]
    for j in range(n - 2, -1, -1):
        p[j] = xi4(p[j + 1], u[j], grade[j], h, gamma, gmu)
    return p


@jit
def _dp_backward_loops(levels, counts, grade, h, gamma, gmu, pm, lam_m, eta, tol):
    n = levels.shape[0]
    G = levels.shape[1]
    value = np.full((n, G), np.inf)
    policy = np.full((n, G), -1, dtype=np.int64)
    for k in range(counts[n - 1]):
        value[n - 1, k] = 0.0
    a = 1.0 - h * gamma
    for i in range(n - 2, -1, -1):
        m_cnt = counts[i + 1]
        nxt = levels[i + 1, :m_cnt]
        for k in range(counts[i]):
            w = levels[i, k]
            if w <= 0.0:
                continue
            base = a * w - h * grade[i]
            fmax = min(gmu, pm / math.sqrt(w))
            lo = base - h * gmu - tol
            hi = base + h * fmax + tol
            tcost = h / math.sqrt(w)
            best = np.inf
            arg = -1
            m = np.searchsorted(nxt, lo)
            while m < m_cnt:
                wn = nxt[m]
                if wn > hi:
                    break
                vn = value[i + 1, m]
                if vn < np.inf:
                    f = (wn - base) / h
                    cost = tcost + h * lam_m * max(eta * f, f) + vn
                    if cost < best:
                        best = cost
                        arg = m
                m += 1
            value[i, k] = best
            policy[i, k] = arg
    return value, policy


def _dp_backward_numpy(levels, counts, grade, h, gamma, gmu, pm, lam_m, eta, tol):
    n, G = levels.shape
    value = np.full((n, G), np.inf)
    policy = np.full((n, G), -1, dtype=np.int64)
    value[n - 1, : counts[n - 1]] = 0.0
    a = 1.0 - h * gamma
    for i in range(n - 2, -1, -1):
        m_cnt = counts[i + 1]
        nxt = levels[i + 1, :m_cnt]
        vnext = value[i + 1, :m_cnt]
        w = levels[i, : counts[i]]
        valid = w > 0.0
        ws = np.where(valid, w, 1.0)
        base = a * ws - h * grade[i]
        lo = base - h * gmu - tol
        hi = base + h * np.minimum(gmu, pm / np.sqrt(ws)) + tol
        start = np.searchsorted(nxt, lo, side="left")
        stop = np.searchsorted(nxt, hi, side="right")
        tcost = h / np.sqrt(ws)
        for k in np.flatnonzero(valid & (stop > start)):
            s, e = start[k], stop[k]
            f = (nxt[s:e] - base[k]) / h
            cost = tcost[k] + h * lam_m * np.maximum(eta * f, f) + vnext[s:e]
            j = int(np.argmin(cost))
            if np.isfinite(cost[j]):
                value[i, k] = cost[j]
                policy[i, k] = s + j
    return value, policy


def dp_backward(levels, counts, grade, h, gamma, gmu, pm, lam_m, eta, tol):
    """Backward DP over a per-stage grid; dispatches on the JIT flag."""
    impl = _dp_backward_loops if JIT_ENABLED else _dp_backward_numpy
    return impl(levels, counts, grade, h, gamma, gmu, pm, lam_m, eta, tol)
