"""Conic solver adapters.

Any backend that maps a :class:`~speedplan.conic.ConicProgram` to a primal
vector can be registered here.  Clarabel is the bundled default; CVXOPT's
``conelp`` is available as a second, independent implementation.  Every
"Optimal" answer is re-verified against the program rows and cones; a failed
re-check downgrades the status to ``NumericalFailure``.
"""

from dataclasses import dataclass, field
import time

import numpy as np
import scipy.sparse as sp

OPTIMAL = "Optimal"
PRIMAL_INFEASIBLE = "PrimalInfeasible"
NUMERICAL_FAILURE = "NumericalFailure"


@dataclass(frozen=True)
class SolverTolerances:
    feas: float = 1e-9
    gap: float = 1e-9
    max_iter: int = 200
    recheck_factor: float = 10.0


# For comparisons of objective values at the 1e-9 .. 1e-7 s level: the
# default relative gap of 1e-9 alone allows ~1e-7 s on a 100 s objective.
PRECISE_TOLERANCES = SolverTolerances(feas=1e-9, gap=1e-12)


@dataclass
class SolveOutcome:
    status: str
    primal: np.ndarray = None
    objective_value: float = float("nan")
    solver_stats: dict = field(default_factory=dict)
    implicated_families: tuple = ()

    @property
    def optimal(self):
        return self.status == OPTIMAL


def _standard_form(program):
    """Stack rows as ``A x + s = b`` with cone list (zero, nonneg, soc...)."""
    rows, cols, vals, rhs, families = [], [], [], [], []

    def push(coefs, sign, b, fam):
        r = len(rhs)
        for i, c in coefs:
            rows.append(r)
            cols.append(i)
            vals.append(sign * c)
        rhs.append(b)
        families.append(fam)

    for row in program.equalities:
        push(row.coefs, 1.0, row.rhs, row.family)
    for row in program.inequalities:
        if row.sense == "<=":
            push(row.coefs, 1.0, row.rhs, row.family)
        else:
            push(row.coefs, -1.0, -row.rhs, row.family)
    for blk in program.soc_blocks:
        a, b, c = blk.a, blk.b, blk.c
        # s = (b + c, 2a, b - c) = const + C x  ->  A = -C, rhs = const
        head = [*b.coefs, *c.coefs]
        tail2 = [*b.coefs, *((i, -v) for i, v in c.coefs)]
        push(head, -1.0, b.const + c.const, blk.family)
        push([(i, 2.0 * v) for i, v in a.coefs], -1.0, 2.0 * a.const, blk.family)
        push(tail2, -1.0, b.const - c.const, blk.family)
    m = len(rhs)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(m, program.num_vars))
    return A, np.array(rhs), families


def _implicated(dual, families, cutoff=0.05):
    """Constraint families carrying at least ``cutoff`` of the largest
    multiplier in an infeasibility certificate, heaviest first.  Interior
    point certificates are not sparse, so this is a ranking, not a proof of
    minimality."""
    if dual is None:
        return ()
    dual = np.abs(np.asarray(dual, dtype=float))
    if dual.size == 0 or not np.any(dual > 0):
        return ()
    weight = {}
    for fam, d in zip(families, dual):
        weight[fam] = max(weight.get(fam, 0.0), d)
    top = max(weight.values())
    return tuple(f for f, d in sorted(weight.items(), key=lambda kv: -kv[1]) if d >= cutoff * top)


def _solve_clarabel(program, tol):
    import clarabel

    A, b, families = _standard_form(program)
    n_eq = len(program.equalities)
    n_in = len(program.inequalities)
    cones = []
    if n_eq:
        cones.append(clarabel.ZeroConeT(n_eq))
    if n_in:
        cones.append(clarabel.NonnegativeConeT(n_in))
    cones.extend(clarabel.SecondOrderConeT(3) for _ in program.soc_blocks)
    settings = clarabel.DefaultSettings()
    settings.verbose = False
    settings.tol_feas = tol.feas
    settings.tol_gap_abs = tol.gap
    settings.tol_gap_rel = tol.gap
    settings.max_iter = tol.max_iter
    P = sp.csc_matrix((program.num_vars, program.num_vars))
    solver = clarabel.DefaultSolver(P, np.asarray(program.objective, float), A, b, cones, settings)
    sol = solver.solve()
    status = str(sol.status)
    stats = {"backend": "clarabel", "raw_status": status, "iterations": int(sol.iterations),
             "solve_time": float(sol.solve_time), "r_prim": float(sol.r_prim),
             "r_dual": float(sol.r_dual)}
    if status in ("Solved", "AlmostSolved"):
        return SolveOutcome(OPTIMAL, np.array(sol.x), float(sol.obj_val), stats)
    if status in ("PrimalInfeasible", "AlmostPrimalInfeasible"):
        return SolveOutcome(PRIMAL_INFEASIBLE, None, float("nan"), stats,
                            _implicated(sol.z, families))
    return SolveOutcome(NUMERICAL_FAILURE, np.array(sol.x), float("nan"), stats)


def _solve_cvxopt(program, tol):
    import cvxopt
    from cvxopt import solvers as cvs

    A_all, b_all, families = _standard_form(program)
    n_eq = len(program.equalities)

    def spmat(M):
        M = M.tocoo()
        return cvxopt.spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), M.shape)

    Aeq, beq = A_all[:n_eq], b_all[:n_eq]
    G, hvec = A_all[n_eq:], b_all[n_eq:]
    dims = {"l": len(program.inequalities), "q": [3] * len(program.soc_blocks), "s": []}
    opts = {"show_progress": False, "abstol": tol.gap, "reltol": tol.gap, "feastol": tol.feas,
            "maxiters": tol.max_iter}
    t0 = time.perf_counter()
    try:
        res = cvs.conelp(cvxopt.matrix(np.asarray(program.objective, float)), spmat(G),
                         cvxopt.matrix(hvec), dims, spmat(Aeq), cvxopt.matrix(beq), options=opts)
    except (ValueError, ArithmeticError) as exc:  # breakdown inside the scaling update
        return SolveOutcome(NUMERICAL_FAILURE, None, float("nan"),
                            {"backend": "cvxopt", "raw_status": f"exception: {exc}",
                             "solve_time": time.perf_counter() - t0})
    stats = {"backend": "cvxopt", "raw_status": res["status"], "iterations": int(res["iterations"]),
             "solve_time": time.perf_counter() - t0,
             "r_prim": float(res["primal infeasibility"] or 0.0),
             "r_dual": float(res["dual infeasibility"] or 0.0)}
    if res["status"] == "optimal":
        x = np.array(res["x"]).ravel()
        return SolveOutcome(OPTIMAL, x, float(res["primal objective"]), stats)
    if res["status"] == "primal infeasible":
        dual = np.concatenate([np.array(res["y"]).ravel(), np.array(res["z"]).ravel()])
        return SolveOutcome(PRIMAL_INFEASIBLE, None, float("nan"), stats,
                            _implicated(dual, families))
    x = None if res["x"] is None else np.array(res["x"]).ravel()
    return SolveOutcome(NUMERICAL_FAILURE, x, float("nan"), stats)


BACKENDS = {"clarabel": _solve_clarabel, "cvxopt": _solve_cvxopt}


def recheck(program, x, tol):
    """Independent scale-relative check of all rows and cones at ``recheck_factor * feas``."""
    viol = program.max_violations(x)
    limit = tol.recheck_factor * tol.feas
    bad = {k: v for k, v in viol.items() if v > limit}
    return not bad, viol


def solve(program, tolerances=None, backend="clarabel", refinements=2):
    """Solve and re-check; on a failed re-check retry with 10x tighter
    solver tolerances (at most ``refinements`` times) before giving up.
    The re-check limit itself always uses the caller's tolerances."""
    tol = tolerances or SolverTolerances()
    try:
        impl = BACKENDS[backend]
    except KeyError:
        raise ValueError(f"unknown backend {backend!r}; choose from {sorted(BACKENDS)}") from None
    limit = tol.recheck_factor * tol.feas
    inner = tol
    for attempt in range(refinements + 1):
        out = impl(program, inner)
        out.solver_stats["attempt"] = attempt
        if out.status != OPTIMAL:
            return out
        ok, viol = recheck(program, out.primal, tol)
        out.solver_stats["recheck_max_violation"] = float(max(viol.values(), default=0.0))
        if ok:
            return out
        out.solver_stats["recheck_failed"] = sorted(k for k, v in viol.items() if v > limit)
        inner = SolverTolerances(feas=inner.feas / 10, gap=inner.gap / 10,
                                 max_iter=inner.max_iter, recheck_factor=inner.recheck_factor)
    out.status = NUMERICAL_FAILURE
    return out
