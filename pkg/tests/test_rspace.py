from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulseforge import elliptic as el
from pulseforge.errors import BranchError, DomainError, NoSolutionError
from pulseforge.rspace import (
    AdjointParams,
    RegularArc,
    negez_arc_from_initial,
    propagate_negez,
    propagate_regular,
    propagate_singular,
    r_from_state,
    singular_arc_from_initial,
    singular_constants,
    singular_control,
)

import oracles

TRANSFER_ADJ = (0.3002237, -1.12045)
HALF_ADJ = (0.64527, -1.69554)


def _random_points(n, seed, *, ez_min=0.05):
    rng = np.random.default_rng(seed)
    pts = []
    while len(pts) < n:
        r = rng.uniform(-1.5, 1.5, 3)
        if singular_constants(r)[1] > ez_min:
            pts.append(r)
    return np.array(pts).T


def test_transfer_constants_of_motion():
    p1, p2 = TRANSFER_ADJ
    arc = singular_arc_from_initial([p1, -p2, 0.0])
    assert arc.es == pytest.approx(p1, abs=1e-15)
    assert arc.ez == pytest.approx(p2**2 / 2, abs=1e-15)
    assert arc.u0 == 0.0


def test_half_transfer_roots_match_closed_form():
    p1, p2 = HALF_ADJ
    arc = singular_arc_from_initial([p1, -p2, 0.0])
    es, ez = p1, p2**2 / 2
    root = math.sqrt((1 - es) ** 2 + 2 * ez)
    r2 = -2 * (1 - es) + 2 * root
    s2 = 2 * (1 - es) + 2 * root
    assert arc.r2 == pytest.approx(r2, abs=1e-12)
    assert arc.s2 == pytest.approx(s2, abs=1e-12)
    assert arc.m == pytest.approx(r2 / (r2 + s2), abs=1e-12)
    assert arc.a_rate == pytest.approx(math.sqrt(r2 + s2) / 2, abs=1e-12)


def test_root_invariants_on_random_points():
    pts = _random_points(30, 11)
    for r in pts.T:
        arc = singular_arc_from_initial(r)
        root = math.sqrt((1 - arc.es) ** 2 + 2 * arc.ez)
        assert arc.r2 == pytest.approx(-2 * (1 - arc.es) + 2 * root, abs=1e-12)
        assert arc.s2 == pytest.approx(2 * (1 - arc.es) + 2 * root, abs=1e-12)
        assert 0 < arc.m < 1
        assert (1 - arc.es) ** 2 + 2 * arc.ez == pytest.approx((1 - r[0]) ** 2 + r[1] ** 2, abs=1e-12)


def test_round_trip_at_zero():
    for r in _random_points(20, 3).T:
        arc = singular_arc_from_initial(r)
        np.testing.assert_allclose(propagate_singular(arc, 0.0), r, atol=1e-10)


def test_branch_errors():
    with pytest.raises(BranchError) as info:
        singular_arc_from_initial([1.5, 0.1, 0.5])
    assert info.value.ez < 0
    with pytest.raises(BranchError):
        singular_arc_from_initial([0.4, 0.0, 0.0])


def test_full_period_returns_to_start():
    p1, p2 = TRANSFER_ADJ
    r0 = np.array([p1, -p2, 0.0])
    arc = singular_arc_from_initial(r0)
    np.testing.assert_allclose(propagate_singular(arc, 4 * el.complete_k(arc.m) / arc.a_rate), r0, atol=1e-12)
    assert arc.period == pytest.approx(4 * el.complete_k(arc.m) / arc.a_rate)


def test_singular_against_rk4_step_1e5():
    r0 = np.array([0.3, -0.8, 0.45])
    arc = singular_arc_from_initial(r0)
    ref = oracles.rk4_fixed(oracles.singular_field, r0, 1.3, 130_000)
    np.testing.assert_allclose(propagate_singular(arc, 1.3), ref, atol=1e-8)


def test_singular_full_period_rk4_twenty_points():
    pts = _random_points(20, 2024)
    periods = []
    analytic = []
    for r in pts.T:
        arc = singular_arc_from_initial(r)
        periods.append(arc.period)
        analytic.append(propagate_singular(arc, arc.period))
    periods = np.array(periods)
    n = int(np.ceil(periods.max() / 1e-4))
    ref = oracles.rk4_fixed(oracles.singular_field, pts, periods, n)
    assert np.max(np.abs(np.array(analytic).T - ref)) < 1e-8


def test_singular_conserved_quantities_two_periods():
    for r in _random_points(10, 5).T:
        arc = singular_arc_from_initial(r)
        t = np.linspace(0.0, 2 * arc.period, 801)
        traj = propagate_singular(arc, t)
        es, ez = singular_constants(traj)
        n2 = np.sum(traj**2, axis=0)
        assert np.ptp(es) < 1e-9
        assert np.ptp(ez) < 1e-9
        assert np.ptp(n2) < 1e-9


def test_time_reversal_by_rebuilding():
    for r in _random_points(10, 8).T:
        arc = singular_arc_from_initial(r)
        t = 0.77
        mid = propagate_singular(arc, t)
        back = singular_arc_from_initial(mid)
        np.testing.assert_allclose(propagate_singular(back, -t), r, atol=1e-9)


def test_batched_construction_matches_scalar():
    pts = _random_points(6, 21)
    arcs = singular_arc_from_initial(pts)
    for k, r in enumerate(pts.T):
        one = singular_arc_from_initial(r)
        assert arcs.u0[k] == pytest.approx(one.u0, abs=1e-14)
        assert arcs.m[k] == pytest.approx(one.m, abs=1e-14)


# -------------------------------------------------------------- E_z < 0


def test_negez_invariants_and_round_trip():
    r0 = np.array([1.5, 0.1, 0.5])
    arc = negez_arc_from_initial(r0)
    assert arc.o2 > arc.q2 > 0
    assert arc.o2 * arc.q2 == pytest.approx(-8 * arc.ez, abs=1e-12)
    assert arc.o2 + arc.q2 == pytest.approx(4 * (arc.es - 1), abs=1e-12)
    assert 0 < arc.m < 1
    np.testing.assert_allclose(propagate_negez(arc, 0.0), r0, atol=1e-10)


@pytest.mark.parametrize("r0", [[1.5, 0.1, 0.5], [1.3, -0.2, -0.6], [2.0, 0.3, 1.1]])
def test_negez_against_rk4(r0):
    r0 = np.array(r0)
    arc = negez_arc_from_initial(r0)
    ref = oracles.rk4_fixed(oracles.singular_field, r0, 0.7, 70_000)
    np.testing.assert_allclose(propagate_negez(arc, 0.7), ref, atol=1e-8)
    ref_p = oracles.rk4_fixed(oracles.singular_field, r0, arc.period, 100_000)
    np.testing.assert_allclose(propagate_negez(arc, arc.period), ref_p, atol=1e-8)


def test_negez_needs_negative_ez():
    with pytest.raises(BranchError):
        negez_arc_from_initial([0.2, 0.0, 0.3])


def test_negez_without_solution(monkeypatch):
    # constants with E_s < 1 and E_z < 0 do not come from any real R, so feed them in directly
    import pulseforge.rspace as rs

    monkeypatch.setattr(rs, "singular_constants", lambda r: (0.5, -0.1))
    with pytest.raises(NoSolutionError):
        rs.negez_arc_from_initial([0.2, 0.1, 0.3])


@settings(max_examples=100, deadline=None)
@given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-3, 3))
def test_ez_negative_only_above_unit_es(rx, ry, rz):
    es, ez = singular_constants([rx, ry, rz])
    if es <= 1:
        assert ez >= 0


# -------------------------------------------------------------- regular


def test_regular_identity_and_period():
    arc = RegularArc(1.5, 1.0, np.array([0.2, -0.4, 0.7]))
    np.testing.assert_allclose(propagate_regular(arc, 0.0), arc.r0, atol=1e-15)
    np.testing.assert_allclose(propagate_regular(arc, 2 * math.pi / arc.w), arc.r0, atol=1e-12)
    assert arc.w**2 == pytest.approx(1.5**2 + 1.0, abs=1e-12)


def test_regular_against_rk4():
    r0 = np.array([0.2, -0.4, 0.7])
    for delta in (1.5, -1.5):
        arc = RegularArc(delta, 1.0, r0)
        ref = oracles.rk4_fixed(oracles.linear_field(delta, 1.0), r0, 0.9, 20_000)
        np.testing.assert_allclose(propagate_regular(arc, 0.9), ref, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(
    st.floats(-2, 2), st.floats(-2, 2), st.floats(-2, 2), st.sampled_from([1.5, -1.5]), st.floats(0, 20)
)
def test_regular_conserves_norm_and_energy(rx, ry, rz, delta, t):
    arc = RegularArc(delta, 1.0, np.array([rx, ry, rz]))
    r = propagate_regular(arc, t)
    assert np.dot(r, r) == pytest.approx(rx * rx + ry * ry + rz * rz, abs=1e-10)
    assert delta * r[2] - r[0] == pytest.approx(arc.energy, abs=1e-10)


# -------------------------------------------------------------- controls and projection


def test_singular_control():
    assert singular_control([0.1, 0.2, 0.0]) == 0.0
    assert singular_control([0.0, 0.0, 0.4], 1.0) == pytest.approx(-0.4)
    p1, p2 = TRANSFER_ADJ
    arc = singular_arc_from_initial([p1, -p2, 0.0])
    t = np.linspace(0, arc.period, 50)
    np.testing.assert_allclose(singular_control(propagate_singular(arc, t)), -propagate_singular(arc, t)[2])


def test_r_from_ground_state():
    adj = AdjointParams(0.3, -1.1, 0.2)
    np.testing.assert_allclose(r_from_state(1.0, 0.0, adj), [0.3, 1.1, 0.2], atol=1e-15)


@pytest.mark.parametrize("beta", [-13 * math.pi / 12, 0.3, 1.9])
def test_r_from_excited_with_phase(beta):
    p1, p2 = 0.41, -0.77
    got = r_from_state(0.0, np.exp(1j * beta), AdjointParams(p1, p2))
    c, s = math.cos(2 * beta), math.sin(2 * beta)
    np.testing.assert_allclose(got, [-c * p1 + s * p2, -s * p1 - c * p2, 0.0], atol=1e-14)


def test_r_from_state_rejects_unnormalized():
    with pytest.raises(DomainError):
        r_from_state(1.0, 0.1, AdjointParams(1.0, 0.0))


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, math.pi),
    st.floats(-math.pi, math.pi),
    st.floats(-math.pi, math.pi),
    st.floats(-2, 2),
    st.floats(-2, 2),
    st.floats(-2, 2),
)
def test_r_norm_equals_adjoint_norm(theta, pa, pb, p1, p2, pe):
    a = math.cos(theta / 2) * np.exp(1j * pa)
    b = math.sin(theta / 2) * np.exp(1j * pb)
    r = r_from_state(a, b, AdjointParams(p1, p2, pe))
    assert np.dot(r, r) == pytest.approx(p1 * p1 + p2 * p2 + pe * pe, abs=1e-12)
