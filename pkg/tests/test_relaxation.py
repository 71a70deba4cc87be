import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from speedplan.conic import Affine, ConicProgram, soc_encode
from speedplan.errors import AssumptionViolation, InconsistentBoundsError, InvalidArgumentError
from speedplan.generators import (
    hard_final_instance,
    random_instance,
    reference_instance,
    unreachable_instance,
)
from speedplan.relaxation import (
    FREE_FINAL,
    assemble,
    extract,
    plan,
    polish,
    verify_exactness,
)
from speedplan.solvers import (
    NUMERICAL_FAILURE,
    OPTIMAL,
    PRIMAL_INFEASIBLE,
    SolverTolerances,
    recheck,
    solve,
)
from speedplan.tightening import BoundsVectors, compute_zy

REF = reference_instance()


# -- cone encoding ---------------------------------------------------------------

@pytest.mark.parametrize("a, b, c, violated", [(1, 2, 2, False), (1, 1, 1, False), (3, 1, 1, True)])
def test_soc_encode_examples(a, b, c, violated):
    blk = soc_encode(a, b, c)
    head, t1, t2 = blk.standard_form(np.zeros(0))
    assert (head, t1, t2) == (b + c, 2 * a, b - c)
    assert (blk.violation(np.zeros(0)) > 0) == violated
    assert (a * a > b * c) == violated


@given(a=st.floats(-10, 10), b=st.floats(0, 10), c=st.floats(0, 10))
def test_soc_encode_equivalence(a, b, c):
    blk = soc_encode(a, b, c)
    margin = a * a - b * c
    if abs(margin) > 1e-9:
        assert (blk.violation(np.zeros(0)) > 0) == (margin > 0)


# -- assembly -----------------------------------------------------------------

def test_assemble_counts():
    prog = assemble(reference_instance(lam=1e-4, eta=0.5))
    assert prog.num_vars == 3 + 5 * 2
    fams = [r.family for r in prog.equalities]
    assert fams.count("dynamics") == 2 and fams.count("boundary") == 2
    assert len(prog.soc_blocks) == 6
    assert sum(r.family == "epigraph" for r in prog.inequalities) == 4


def test_assemble_lambda_zero_elides_epigraph():
    prog = assemble(REF)
    assert prog.num_vars == 3 + 4 * 2
    assert not any(r == "e" for r, _ in prog.var_index)
    assert not any(r.family == "epigraph" for r in prog.inequalities)
    # objective is h * t_i in physical units
    x = np.zeros(prog.num_vars)
    x[prog.role_ids("t")] = 1.0 / prog.scales["t"]
    assert prog.objective_value(x) == pytest.approx(REF.h * 2)


def test_assemble_free_final_has_one_boundary_row():
    prog = assemble(REF, mode=FREE_FINAL)
    assert sum(r.family == "boundary" for r in prog.equalities) == 1


def test_assemble_var_index_unique():
    prog = assemble(random_instance(np.random.default_rng(0), 25))
    ids = sorted(prog.var_index.values())
    assert ids == list(range(prog.num_vars))
    n = 25
    assert len(prog.role_ids("w")) == n
    for role in ("t", "f", "z", "y"):
        assert len(prog.role_ids(role)) == n - 1


def test_assemble_rejects_inconsistent_bounds():
    with pytest.raises(InconsistentBoundsError) as exc:
        assemble(REF, BoundsVectors(l=[16, 30, 16], u=[16, 20, 16]))
    assert exc.value.index == 2
    with pytest.raises(InvalidArgumentError):
        assemble(REF, mode="nope")


def test_program_json_roundtrip():
    prog = assemble(reference_instance(lam=1e-4, eta=0.3))
    text = prog.to_json()
    doc = json.loads(text)
    assert doc["format"] == "speedplan-conic/1"
    back = ConicProgram.from_json(text)
    assert back.to_dict() == doc
    a = solve(prog)
    b = solve(back)
    np.testing.assert_allclose(a.primal, b.primal, rtol=0, atol=0)


# -- solve ----------------------------------------------------------------------

@pytest.mark.parametrize("backend", ["clarabel", "cvxopt"])
def test_solve_reference(backend):
    v = compute_zy(REF)
    prog = assemble(REF, v.bounds())
    out = solve(prog, backend=backend)
    assert out.status == OPTIMAL
    w = extract(prog, out.primal, "w")
    assert v.y[1] - 1e-9 <= w[1] <= v.z[1] + 1e-9
    assert w[1] == pytest.approx(23.7435, abs=1e-6)
    ok, _ = recheck(prog, out.primal, SolverTolerances())
    assert ok


def test_solve_single_point_box():
    z = compute_zy(REF).z
    prog = assemble(REF, BoundsVectors(l=z, u=z))
    out = solve(prog)
    assert out.status == OPTIMAL
    np.testing.assert_allclose(extract(prog, out.primal, "w"), z, atol=1e-9)


@pytest.mark.parametrize("backend", ["clarabel", "cvxopt"])
def test_solve_unreachable_untightened_is_infeasible(backend):
    out = solve(assemble(unreachable_instance()), backend=backend)
    assert out.status == PRIMAL_INFEASIBLE
    assert "boundary" in out.implicated_families


def test_solve_unknown_backend():
    with pytest.raises(ValueError):
        solve(assemble(REF), backend="nope")


def test_recheck_downgrades_bad_point(monkeypatch):
    from speedplan import solvers

    prog = assemble(REF)

    def fake(program, tol):
        return solvers.SolveOutcome(OPTIMAL, np.zeros(program.num_vars), 0.0, {})

    monkeypatch.setitem(solvers.BACKENDS, "fake", fake)
    out = solve(prog, backend="fake")
    assert out.status == NUMERICAL_FAILURE
    assert "boundary" in out.solver_stats["recheck_failed"]


# -- exactness -------------------------------------------------------------------

def test_verify_exactness_examples():
    w = np.array([16.0, 25.0, 16.0])
    rep = verify_exactness(w, 1 / np.sqrt(w[:-1]))
    assert rep.exact and rep.tail_length_r == 0 and rep.suffix_structure
    t = np.array([0.25, 0.3])
    w2 = np.array([16.0, 16.0, 9.0])
    rep = verify_exactness(w2, t)
    assert rep.residuals[-1] == pytest.approx(0.2)
    assert rep.tail_length_r == 1 and rep.violated == (2,) and not rep.exact
    gap = verify_exactness(np.full(4, 16.0), np.array([0.3, 0.25, 0.25]))
    assert gap.violated == (1,) and gap.tail_length_r == 0 and not gap.suffix_structure
    with pytest.raises(InvalidArgumentError):
        verify_exactness(w, np.ones(3))


# -- pipeline -----------------------------------------------------------------

def test_plan_reference():
    rep = plan(REF)
    assert rep.status == "exact"
    p = rep.profile
    assert p.w[1] == pytest.approx(23.7435, abs=1e-6)
    assert p.exactness.max_residual <= 1e-6
    np.testing.assert_allclose(p.v, np.sqrt(2 * p.w), rtol=1e-12)
    assert p.total == pytest.approx(rep.outcome.objective_value, abs=1e-8)


def test_plan_unreachable():
    rep = plan(unreachable_instance())
    assert rep.status == "infeasible" and rep.infeasible_index == 1


def test_plan_untightened_unreachable_reports_solver_infeasibility():
    rep = plan(unreachable_instance(), tighten=False)
    assert rep.status == "infeasible"
    assert rep.outcome.status == PRIMAL_INFEASIBLE


def test_plan_requires_a3_for_tightening():
    with pytest.raises(AssumptionViolation):
        plan(REF.replace(h=50.0))


def test_plan_hard_final_gap():
    inst = hard_final_instance(3, n=60)
    loose = plan(inst, tighten=False)
    tight = plan(inst)
    assert loose.status == "inexact"
    ex = loose.profile.exactness
    assert ex.tail_length_r >= 1 and ex.suffix_structure
    assert tight.status == "exact"
    assert tight.outcome.objective_value - loose.outcome.objective_value > 1e-4


def test_free_final_objective_not_worse():
    rng = np.random.default_rng(7)
    inst = random_instance(rng, 40)
    fixed = plan(inst)
    free = plan(inst, mode=FREE_FINAL, tighten=False)
    assert free.status == "exact"
    assert free.outcome.objective_value <= fixed.outcome.objective_value + 1e-7


@settings(max_examples=15)
@given(seed=st.integers(0, 2**31))
def test_relaxation_ordering_and_envelope_membership(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(5, 60)))
    tight = plan(inst)
    loose = plan(inst, tighten=False)
    assert tight.status == "exact"
    assert loose.outcome.objective_value <= tight.outcome.objective_value + 1e-7
    w = extract(tight.program, tight.outcome.primal, "w")
    assert np.all(w >= tight.verdict.y - 1e-9) and np.all(w <= tight.verdict.z + 1e-9)
    f = tight.profile.f
    np.testing.assert_allclose(f, np.diff(tight.profile.w) / inst.h
                               + inst.vehicle.gamma * tight.profile.w[:-1] + inst.grade, atol=1e-9)


def test_polish_keeps_feasible_points():
    v = compute_zy(REF)
    out = polish(v.z, REF, v.y, v.z)
    np.testing.assert_allclose(out, v.z, atol=1e-12)
    bad = v.z.copy()
    bad[-1] = 1e3
    assert polish(v.z, REF.replace(w_max=[16, 100, 1e3], w_fin=1e3), v.y, bad) is None


# -- per-stage cone balancing ------------------------------------------------------

def _badly_scaled_free_final():
    # free-final track whose optimum dips to w ~ 15 under a global scale of 900
    rng = np.random.default_rng(2002)
    for _ in range(12):
        inst = random_instance(rng, int(rng.integers(10, 150)))
    return inst


def test_balanced_cones_keep_the_feasible_set():
    inst = random_instance(np.random.default_rng(8), 25)
    plain = assemble(inst)
    balanced = assemble(inst, w_ref=np.linspace(5.0, 400.0, inst.n))
    a, b = solve(plain), solve(balanced)
    assert a.status == b.status == OPTIMAL
    assert a.objective_value == pytest.approx(b.objective_value, rel=1e-7)
    # the plain optimum is (nearly) feasible for the balanced encoding and vice versa
    assert max(balanced.max_violations(a.primal).values()) < 1e-6
    assert max(plain.max_violations(b.primal).values()) < 1e-6


def test_unit_reference_profile_is_the_plain_encoding():
    inst = random_instance(np.random.default_rng(9), 12)
    S = float(np.max(inst.upper_limits()))
    assert assemble(inst, w_ref=np.full(inst.n, S)).to_dict() == assemble(inst).to_dict()


def test_rebalancing_removes_negative_residuals():
    inst = _badly_scaled_free_final()
    prog = assemble(inst, None, FREE_FINAL)
    out = solve(prog)
    w, t = extract(prog, out.primal, "w"), extract(prog, out.primal, "t")
    single_pass = float(np.min(t * np.sqrt(w[:-1]) - 1.0))
    rep = plan(inst, mode=FREE_FINAL, tighten=False)
    assert rep.outcome.solver_stats["rebalance"] == "applied"
    assert rep.status == "exact"
    assert float(np.min(rep.profile.residuals)) > -1e-8
    assert float(np.min(rep.profile.residuals)) > single_pass
