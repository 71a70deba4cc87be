"""Second-order cone relaxation of the speed-planning problem and the
tighten -> assemble -> solve -> verify pipeline.

The non-convex identity ``t_i = 1/sqrt(w_i)`` is relaxed to
``t_i >= 1/sqrt(w_i)``, written as the three rotated cones
``1 <= z_i y_i``, ``y_i^2 <= t_i``, ``z_i^2 <= t_i w_i``.  The relaxed optimum
is exact when every identity is tight again; with the tightened lower
envelope in the box this is guaranteed under the standing assumptions.
"""

from dataclasses import dataclass, field
import logging
import math

import numpy as np

from . import _kernels as K
from .conic import Affine, ConicProgram, soc_encode
from .errors import AssumptionViolation, InconsistentBoundsError, InvalidArgumentError
from .model import check_assumptions, critical_speed, force_profile, objective
from .solvers import NUMERICAL_FAILURE, OPTIMAL, PRIMAL_INFEASIBLE, SolverTolerances, solve
from .tightening import (
    DEFAULT_EPS,
    BoundsVectors,
    InfeasibleAt,
    compute_zy,
    sweep,
    tightened_lower_bounds,
)

log = logging.getLogger(__name__)

WITH_FINAL = "with_final"
FREE_FINAL = "free_final"
DEFAULT_TOL = 1e-6


def _auto_scale(instance, bounds):
    top = float(np.max(bounds.u))
    return top if top > 0 else 1.0


def _cone_balance(w_ref, S):
    """Per-stage factors ``k`` for ``a^2 <= (k b)(c / k)`` in the three cones.

    At ``t = 1/sqrt(w)`` the solver values are ``w~ = rho``, ``t~ = rho^-1/2``,
    ``z = rho^1/4`` and ``y = rho^-1/4`` with ``rho = w_ref / S``; the factors
    make both rotated-cone operands equal there.  Without this, stages where
    ``w`` sits far below ``S`` carry a cone slack that is tiny in solver units
    but large relative to ``t sqrt(w) - 1``.
    """
    rho = np.clip(np.asarray(w_ref, dtype=float) / S, 1e-6, 1e6)
    return {"cone_zy": rho ** -0.25, "cone_y": rho ** 0.25, "cone_z": rho ** 0.75}


def assemble(instance, bounds=None, mode=WITH_FINAL, w_scale="auto", w_ref=None):
    """Build the relaxed program; ``bounds=None`` uses the untightened box.

    Variables are stored in balanced units: ``w = S * w~`` and
    ``t = t~ / sqrt(S)`` (cone auxiliaries scale accordingly) so that every
    cone operand is O(1).  ``program.scales`` maps each role to the factor
    that turns a solver value back into physical units.  ``w_ref`` (length
    n, physical units) is a representative profile used to balance each
    stage's rotated cones; it changes the encoding, not the feasible set.
    """
    if mode not in (WITH_FINAL, FREE_FINAL):
        raise InvalidArgumentError(f"unknown mode {mode!r}")
    free = mode == FREE_FINAL
    if bounds is None:
        bounds = BoundsVectors(l=instance.lower_limits(free), u=instance.upper_limits(free))
    n = instance.n
    if bounds.l.shape != (n,):
        raise InvalidArgumentError(f"bounds must have length {n}")
    bad = np.flatnonzero(bounds.l > bounds.u)
    if bad.size:
        raise InconsistentBoundsError("lower envelope exceeds upper envelope", index=int(bad[0]) + 1)

    S = _auto_scale(instance, bounds) if w_scale == "auto" else float(w_scale)
    rs = math.sqrt(S)
    p = instance.vehicle
    h, lam = instance.h, instance.lam
    use_energy = lam > 0
    grade = instance.grade
    gmu = p.g * p.mu
    k = _cone_balance(np.ones(n) * S if w_ref is None else w_ref, S)

    prog = ConicProgram()
    w = [prog.add_var("w", i) for i in range(n)]
    stage = []
    for i in range(n - 1):
        ids = {"t": prog.add_var("t", i), "f": prog.add_var("f", i)}
        if use_energy:
            ids["e"] = prog.add_var("e", i)
        ids["z"] = prog.add_var("z", i)
        ids["y"] = prog.add_var("y", i)
        stage.append(ids)

    obj = np.zeros(prog.num_vars)
    for i, ids in enumerate(stage):
        t, f, z, y = ids["t"], ids["f"], ids["z"], ids["y"]
        prog.add_eq([(f, 1.0), (w[i + 1], -S / h), (w[i], S * (1.0 / h - p.gamma))], grade[i],
                    "dynamics")
        prog.add_ineq([(t, 1.0 / rs), (f, -p.M / p.P_max)], ">=", 0.0, "power")
        prog.add_ineq([(f, 1.0)], "<=", gmu, "force_max")
        prog.add_ineq([(f, 1.0)], ">=", -gmu, "force_min")
        kzy, ky, kz = k["cone_zy"][i], k["cone_y"][i], k["cone_z"][i]
        prog.add_cone(soc_encode(1.0, Affine.var(z, kzy), Affine.var(y, 1.0 / kzy), "cone_zy"))
        prog.add_cone(soc_encode(Affine.var(y), Affine.var(t, ky), 1.0 / ky, "cone_y"))
        prog.add_cone(soc_encode(Affine.var(z), Affine.var(t, kz), Affine.var(w[i], 1.0 / kz),
                                 "cone_z"))
        obj[t] = h / rs
        if use_energy:
            e = ids["e"]
            prog.add_ineq([(e, 1.0), (f, -instance.eta)], ">=", 0.0, "epigraph")
            prog.add_ineq([(e, 1.0), (f, -1.0)], ">=", 0.0, "epigraph")
            obj[e] = h * lam * p.M
    prog.objective = obj
    prog.scales = {"w": S, "t": 1.0 / rs, "f": 1.0, "e": 1.0, "z": 1.0, "y": 1.0}

    prog.add_eq([(w[0], 1.0)], instance.w_init / S, "boundary")
    if not free:
        prog.add_eq([(w[-1], 1.0)], instance.w_fin / S, "boundary")
    for i in range(n):
        prog.add_ineq([(w[i], 1.0)], ">=", bounds.l[i] / S, "box_lower")
        prog.add_ineq([(w[i], 1.0)], "<=", bounds.u[i] / S, "box_upper")
    return prog


@dataclass(frozen=True)
class ExactnessReport:
    residuals: np.ndarray
    max_residual: float
    exact: bool
    tail_length_r: int
    violated: tuple
    suffix_structure: bool


def verify_exactness(w, t, tol=DEFAULT_TOL):
    """Residuals ``t_i sqrt(w_i) - 1`` and the trailing-violation count ``r``.

    ``violated`` lists 1-based positions whose residual exceeds ``tol``;
    ``suffix_structure`` is False when those positions are not a contiguous
    tail ending at n-1.
    """
    w = np.asarray(w, dtype=float)
    t = np.asarray(t, dtype=float)
    if t.shape != (w.shape[0] - 1,):
        raise InvalidArgumentError("t must have length n-1")
    res = t * np.sqrt(np.maximum(w[:-1], 0.0)) - 1.0
    over = res > tol
    r = 0
    for flag in over[::-1]:
        if not flag:
            break
        r += 1
    violated = tuple(int(i) + 1 for i in np.flatnonzero(over))
    max_abs = float(np.max(np.abs(res))) if res.size else 0.0
    return ExactnessReport(
        residuals=res,
        max_residual=max_abs,
        exact=max_abs <= tol,
        tail_length_r=r,
        violated=violated,
        suffix_structure=len(violated) == r,
    )


def polish(w, instance, lower, upper, final_fixed=True, slack=1e-9):
    """Snap a near-feasible profile onto the feasible set by a forward clamp.

    Each ``w_{i+1}`` is clipped into the one-step reachable interval of the
    already-polished ``w_i`` intersected with ``[lower, upper]``.  With
    envelopes from :func:`compute_zy` the interval is never empty.  Returns
    None if it is empty by more than ``slack`` (relative).
    """
    p = instance.vehicle
    h, gam, gmu, pm = instance.h, p.gamma, p.g * p.mu, p.P_max / p.M
    wbar = critical_speed(p)
    grade = instance.grade
    out = np.array(w, dtype=float)
    out[0] = instance.w_init
    for i in range(instance.n - 1):
        lo = max(lower[i + 1], (1.0 - h * gam) * out[i] - h * (grade[i] + gmu))
        hi = min(upper[i + 1], K.ell(out[i], h, gam, gmu, pm, wbar) - h * grade[i])
        if i == instance.n - 2 and final_fixed:
            target = instance.w_fin
            if target < lo - slack * max(1.0, lo) or target > hi + slack * max(1.0, hi):
                return None
            out[i + 1] = target
            continue
        if lo > hi:
            if lo - hi > slack * max(1.0, hi):
                return None
            out[i + 1] = 0.5 * (lo + hi)
            continue
        out[i + 1] = min(max(out[i + 1], lo), hi)
    return out


@dataclass
class SpeedProfile:
    w: np.ndarray
    v: np.ndarray
    f: np.ndarray
    t: np.ndarray
    energy_term: float
    time_term: float
    total: float
    relaxed_objective: float
    exactness: ExactnessReport
    polish_shift: float = 0.0

    @property
    def residuals(self):
        return self.exactness.residuals

    @property
    def tail_length_r(self):
        return self.exactness.tail_length_r

    @property
    def exact(self):
        return self.exactness.exact


@dataclass
class PlanReport:
    status: str  # "exact" | "inexact" | "infeasible" | "numerical_failure"
    mode: str
    tightened: bool
    assumptions: object
    profile: SpeedProfile = None
    verdict: object = None
    lower_recursion: np.ndarray = None
    upper_recursion: np.ndarray = None
    infeasible_index: int = None
    outcome: object = None
    program: ConicProgram = None
    diagnostics: list = field(default_factory=list)


def extract(prog, x, role):
    """Physical values of one variable role from a solver vector."""
    return x[prog.role_ids(role)] * prog.scales.get(role, 1.0)


def _extract(prog, x):
    return extract(prog, x, "w"), extract(prog, x, "t"), extract(prog, x, "f")


def _solve_rebalanced(instance, bounds, mode, solver_tol, backend):
    """Solve, then re-solve with each stage's cones balanced around the first answer.

    The second pass removes the amplification of solver slack at stages
    where ``w`` is far below the global scale (see :func:`_cone_balance`).
    A first pass that stalls numerically still seeds the second; if the
    second does not reach an optimum, the first outcome is kept.
    """
    prog = assemble(instance, bounds, mode)
    out = solve(prog, solver_tol, backend=backend)
    usable = out.primal is not None and np.all(np.isfinite(out.primal))
    if out.status == PRIMAL_INFEASIBLE or not usable:
        return prog, out
    S = prog.scales["w"]
    w_ref = np.maximum(extract(prog, out.primal, "w"), 1e-6 * S)
    prog2 = assemble(instance, bounds, mode, w_ref=w_ref)
    out2 = solve(prog2, solver_tol, backend=backend)
    if out2.status != OPTIMAL:
        out.solver_stats["rebalance"] = f"second pass {out2.status}; first pass kept"
        return prog, out
    out2.solver_stats["rebalance"] = "applied"
    out2.solver_stats["first_pass_iterations"] = out.solver_stats.get("iterations")
    return prog2, out2


def plan(instance, mode=WITH_FINAL, tighten=True, eps=DEFAULT_EPS, tol=DEFAULT_TOL,
         solver_tol=None, backend="clarabel"):
    """Run the full pipeline and return a :class:`PlanReport`.

    Failing A1/A2 only produces a diagnostic (exactness is then not
    guaranteed); tightening without A3 raises :class:`AssumptionViolation`.
    """
    free = mode == FREE_FINAL
    report = check_assumptions(instance)
    rep = PlanReport(status="", mode=mode, tightened=tighten, assumptions=report)
    if not (report.a1_holds and report.a2_holds):
        rep.diagnostics.append("assumption A1 or A2 fails: exactness is not guaranteed")
        log.warning(rep.diagnostics[-1])
    if not report.a3_holds:
        if tighten:
            raise AssumptionViolation("bound tightening requires assumption A3")
        rep.diagnostics.append("assumption A3 fails: envelopes unavailable")
    else:
        lrec = tightened_lower_bounds(instance, free_final=free)
        if isinstance(lrec, InfeasibleAt):
            rep.lower_recursion = lrec.l
            rep.infeasible_index = lrec.index
            if tighten:
                rep.status = "infeasible"
                return rep
        else:
            rep.lower_recursion = lrec
        rep.upper_recursion = sweep("B2", instance.upper_limits(free), instance)
        rep.verdict = compute_zy(instance, eps=eps, free_final=free)
        if not rep.verdict.verified:
            rep.diagnostics.append("envelopes failed the direct constraint check")
        if not rep.verdict.feasible and tighten:
            rep.infeasible_index = rep.verdict.witness_index
            rep.status = "infeasible"
            return rep

    bounds = rep.verdict.bounds() if tighten else None
    prog, out = _solve_rebalanced(instance, bounds, mode, solver_tol, backend)
    rep.program = prog
    rep.outcome = out
    if out.status == PRIMAL_INFEASIBLE:
        if tighten and rep.verdict is not None and rep.verdict.feasible:
            rep.diagnostics.append(
                "solver reports infeasible but envelopes certify feasibility: internal error")
        rep.status = "infeasible"
        return rep
    if out.status != OPTIMAL:
        rep.status = "numerical_failure"
        return rep

    w_raw, t, f_raw = _extract(prog, out.primal)
    ex = verify_exactness(w_raw, t, tol)
    w = w_raw
    shift = 0.0
    if ex.exact:
        if rep.verdict is not None and rep.verdict.feasible:
            lo, up = rep.verdict.y, rep.verdict.z
        else:
            lo, up = instance.lower_limits(free), instance.upper_limits(free)
        polished = polish(w_raw, instance, lo, up, final_fixed=not free)
        if polished is None:
            rep.diagnostics.append("polishing onto the feasible set failed; raw solver point kept")
        else:
            shift = float(np.max(np.abs(polished - w_raw)))
            w = polished
    f = force_profile(w, instance)
    obj = objective(w, f, instance)
    rep.profile = SpeedProfile(
        w=w, v=np.sqrt(2.0 * w), f=f, t=t,
        energy_term=obj["energy_term"], time_term=obj["time_term"], total=obj["total"],
        relaxed_objective=out.objective_value, exactness=ex, polish_shift=shift,
    )
    if not ex.suffix_structure:
        rep.diagnostics.append("violated power identities do not form a suffix")
    rep.status = "exact" if ex.exact else "inexact"
    return rep
