import math

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from speedplan.errors import (
    AssumptionViolation,
    ConvergenceError,
    DomainError,
    InvalidArgumentError,
    InvalidParameterError,
    NoSolutionError,
)
from speedplan.generators import random_instance, reference_instance, unreachable_instance
from speedplan.model import TrackInstance, VehicleParams, critical_speed
from speedplan.oracle import is_feasible_point, reachable_intervals
from speedplan.tightening import (
    InfeasibleAt,
    compute_zy,
    ell,
    ell_inverse,
    envelopes_satisfy_constraints,
    sweep,
    tightened_lower_bounds,
    xi1,
    xi2,
    xi3,
    xi4,
)

from derive_fixtures import fixtures

FX = fixtures()
REF = reference_instance()


# -- ell ---------------------------------------------------------------------

def test_ell_fixtures():
    assert ell(10, REF) == pytest.approx(FX["ell(10)"], abs=1e-12)
    assert ell(10, REF) == pytest.approx(17.844, abs=1e-9)
    assert ell(100, REF) == pytest.approx(104.96, abs=1e-9)


def test_ell_zero_step_is_identity():
    inst = REF.replace(h=1e-300)
    for w in (0.5, 10.0, 1e3):
        assert ell(w, inst) == pytest.approx(w, rel=1e-15)


def test_ell_domain():
    with pytest.raises(DomainError):
        ell(0.0, REF)
    with pytest.raises(DomainError):
        ell(-1.0, REF)


def test_ell_branch_continuity():
    wb = critical_speed(REF.vehicle)
    lo = ell(np.nextafter(wb, 0), REF)
    hi = ell(np.nextafter(wb, np.inf), REF)
    assert abs(lo - hi) <= 1e-12 * ell(wb, REF)


@given(a=st.floats(1e-3, 2e3), b=st.floats(1e-3, 2e3))
def test_ell_strictly_increasing(a, b):
    assume(abs(a - b) > 1e-9 * max(a, b))
    lo, hi = min(a, b), max(a, b)
    assert ell(lo, REF) < ell(hi, REF)


def test_ell_inverse_fixtures():
    assert ell_inverse(17.844, REF) == pytest.approx(10.0, abs=1e-9)
    assert ell_inverse(104.96, REF) == pytest.approx(100.0, abs=1e-6)
    assert ell_inverse(104.96, REF) == pytest.approx(FX["ell_inverse(104.96)"], abs=1e-9)
    wb = critical_speed(REF.vehicle)
    assert ell_inverse(ell(wb, REF), REF) == pytest.approx(wb, rel=1e-12)


@given(w=st.floats(1e-2, 5e3))
def test_ell_inverse_roundtrip(w):
    target = ell(w, REF)
    root = ell_inverse(target, REF)
    assert abs(ell(root, REF) - target) <= 1e-12 * max(1.0, target)


def test_ell_inverse_errors():
    with pytest.raises(NoSolutionError):
        ell_inverse(REF.h * 9.81 * 0.8, REF)
    with pytest.raises(AssumptionViolation):
        ell_inverse(100.0, REF.replace(h=50.0))


# -- xi maps -----------------------------------------------------------------

def test_xi_fixtures():
    assert xi1(16, 16, 0.0, REF) == 16.0
    assert xi1(16, 0, 0.0, REF) == pytest.approx(FX["xi1(16,floor=0)"], abs=1e-12)
    assert xi1(16, 0, 0.0, REF) == pytest.approx(8.2534, abs=1e-4)
    assert xi1(0, 0, 0.0, REF) == 0.0
    assert xi2(16, 100, 0.0, REF) == pytest.approx(23.7435, abs=1e-12)
    assert xi2(16, 0, 0.0, REF) == 0.0
    assert xi2(16, 10, 0.0, REF) == 10.0
    assert xi3(20, 0, 0.0, REF) == pytest.approx(12.0459, abs=1e-12)
    assert xi3(0, 3.0, 0.0, REF) == 3.0
    assert xi3(20, 15.0, 0.0, REF) == 15.0
    assert xi4(20, 100, 0.0, REF) == pytest.approx(FX["xi4(20,cap=100)"], abs=1e-12)
    assert xi4(20, 100, 0.0, REF) == pytest.approx(27.9573, abs=1e-4)
    assert xi4(20, 5, 0.0, REF) == 5.0


def test_xi4_identity_without_losses():
    veh = VehicleParams(M=1200, P_max=6e4, mu=1e-300, c=0.0, gamma=0.0)
    inst = REF.replace(vehicle=veh)
    assert xi4(20, 100, 0.0, inst) == pytest.approx(20.0, rel=1e-15)


def test_xi_errors():
    with pytest.raises(InvalidParameterError):
        xi1(16, -1, 0.0, REF)
    with pytest.raises(DomainError):
        xi2(0.0, 10, 0.0, REF)
    veh = VehicleParams(M=1200, P_max=6e4, mu=0.8, c=0.01, gamma=2.0)
    with pytest.raises(InvalidParameterError):
        xi4(20, 100, 0.0, REF.replace(vehicle=veh))


@given(a=st.floats(0, 500), b=st.floats(0, 500), floor=st.floats(0, 100),
       alpha=st.floats(-0.06, 0.06))
def test_xi1_monotone_in_next(a, b, floor, alpha):
    lo, hi = min(a, b), max(a, b)
    assert xi1(lo, floor, alpha, REF) <= xi1(hi, floor, alpha, REF)


@given(w=st.floats(1e-2, 500), alpha=st.floats(-0.06, 0.06))
def test_xi1_is_minimal_preimage(w, alpha):
    """xi1 returns the smallest w_i from which w_next is reachable: one
    step at full traction from xi1 lands at least on w_next, and anything
    noticeably smaller falls short."""
    root = xi1(w, 0.0, alpha, REF)
    load = REF.vehicle.g * (math.sin(alpha) + REF.vehicle.c)
    if root > 0:
        assert ell(root, REF) - load * REF.h >= w - 1e-9 * max(1, w)
        smaller = root * (1 - 1e-6)
        if smaller > 0:
            assert ell(smaller, REF) - load * REF.h < w


# -- sweeps ------------------------------------------------------------------

def test_sweep_fixtures():
    np.testing.assert_allclose(sweep("B1", np.array([16, 0, 16.0]), REF), [16, FX["y2"], 16],
                               atol=1e-12)
    np.testing.assert_allclose(sweep("B2", np.array([16, 100, 16.0]), REF), [16, 23.7435, 16],
                               atol=1e-12)
    fixed = np.array([16, FX["y2"], 16])
    np.testing.assert_array_equal(sweep("B3", fixed, REF), fixed)


def test_sweep_errors():
    with pytest.raises(InvalidArgumentError):
        sweep("B5", np.zeros(3), REF)
    with pytest.raises(InvalidArgumentError):
        sweep("B1", np.zeros(4), REF)
    with pytest.raises(AssumptionViolation):
        sweep("B2", np.full(3, 16.0), REF.replace(h=50.0))


@given(seed=st.integers(0, 2**31))
def test_sweep_monotone_contracts(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(3, 40)))
    u0 = inst.upper_limits()
    l0 = inst.lower_limits()
    l_mid = rng.uniform(0, 1, inst.n) * u0
    for l in (l0, l_mid):
        assert np.all(sweep("B1", l, inst) >= l)
        assert np.all(sweep("B3", l, inst) >= l)
    assert np.all(sweep("B2", u0, inst) <= u0)
    assert np.all(sweep("B4", u0, inst) <= u0)


# -- lower recursion ------------------------------------------------------------

def test_tightened_lower_bounds_reference():
    l = tightened_lower_bounds(REF)
    np.testing.assert_allclose(l, [16, 8.2534, 16], atol=1e-4)


def test_tightened_lower_bounds_unreachable():
    res = tightened_lower_bounds(unreachable_instance())
    assert isinstance(res, InfeasibleAt)
    assert res.index == 1
    # independent bisection value of the minimal predecessor of 100
    assert res.l[0] == pytest.approx(FX["n2:l1"], rel=1e-12)


def test_lower_bounds_zero_final_speed():
    inst = TrackInstance(h=1.0, alpha=np.zeros(5), w_max=np.full(6, 200.0), w_init=16.0,
                         w_fin=0.0, vehicle=REF.vehicle)
    l = tightened_lower_bounds(inst)
    np.testing.assert_array_equal(l[1:], 0.0)


# -- compute_zy ---------------------------------------------------------------

def test_compute_zy_reference():
    v = compute_zy(REF, eps=1e-9)
    assert v.feasible and v.status == "Feasible"
    assert v.iterations == 2
    np.testing.assert_allclose(v.z, [16, 23.7435, 16], atol=1e-4)
    np.testing.assert_allclose(v.y, [16, 8.2534, 16], atol=1e-4)
    assert v.verified


def test_compute_zy_unreachable():
    v = compute_zy(unreachable_instance())
    assert not v.feasible and v.status == "Infeasible"
    assert v.witness_index == 2
    assert v.upper[1] == pytest.approx(8.7495, abs=1e-12)
    assert v.upper[v.witness_index - 1] < v.lower[v.witness_index - 1]


def test_compute_zy_single_point_box():
    """Starting envelopes already equal to a feasible point are a fixed point."""
    z = compute_zy(REF).z
    v = compute_zy(REF, lower=z, upper=z)
    assert v.feasible and v.iterations == 1
    np.testing.assert_array_equal(v.z, v.y)


def test_compute_zy_errors():
    with pytest.raises(InvalidParameterError):
        compute_zy(REF, eps=0.0)
    with pytest.raises(AssumptionViolation):
        compute_zy(REF.replace(h=50.0))
    with pytest.raises(InvalidArgumentError):
        compute_zy(REF, lower=np.zeros(2))


def test_compute_zy_iteration_cap():
    rng = np.random.default_rng(1)
    inst = random_instance(rng, 80)
    with pytest.raises(ConvergenceError) as exc:
        compute_zy(inst, eps=1e-300, max_iter=1)
    assert exc.value.iterations == 1 and exc.value.upper.shape == (80,)


@given(seed=st.integers(0, 2**31))
def test_compute_zy_monotone_and_envelopes(seed):
    rng = np.random.default_rng(seed)
    inst = random_instance(rng, int(rng.integers(3, 60)), feasible=None)
    v = compute_zy(inst, record_history=True)
    for u, u_half, u_next, l, l_half, l_next in v.history:
        assert np.all(u_half <= u) and np.all(u_next <= u_half)
        assert np.all(l_half >= l) and np.all(l_next >= l_half)
    assert v.feasible == reachable_intervals(inst).feasible
    if v.feasible:
        assert np.all(v.y <= v.z)
        assert v.z[0] == v.y[0] == inst.w_init
        assert v.z[-1] == v.y[-1] == inst.w_fin
        for point in (v.z, v.y):
            assert is_feasible_point(point, inst, tol=1e-9)
        assert envelopes_satisfy_constraints(inst, v.z, v.y)
