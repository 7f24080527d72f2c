from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pulseforge.extremal import (
    PontryaginPoint,
    omega_singular_witness,
    omega_witness_residuals,
    pontryagin_h,
    propagate_ir,
    singular_residuals,
    singular_seed_i,
    switching_derivatives,
    switching_functions,
)
from pulseforge.protocol import Arc, ControlProtocol
from pulseforge.rspace import RegularArc, propagate_regular, singular_arc_from_initial


def _pt(i, r, d=1.5, o=1.0):
    return PontryaginPoint(np.asarray(i, float), np.asarray(r, float), d, o)


def test_hamiltonian_examples():
    r = np.array([0.3, -0.5, 0.2])
    assert pontryagin_h(_pt(singular_seed_i(r), r, d=0.7)) == pytest.approx(0.0, abs=1e-15)
    assert pontryagin_h(_pt(np.zeros(3), np.zeros(3), d=-1.5, o=0.4)) == -1.0


def test_switching_function_examples():
    r = np.array([0.3, 0.1, -0.2])
    assert switching_functions(_pt(singular_seed_i(r), r))[0] == 0.0
    assert switching_functions(_pt([0.1, 0.0, 0.2], [0.3, 0.0, 0.0])) == pytest.approx((0.2, 0.4))


def test_singular_residuals_vanish_at_seed():
    r = np.array([0.6, 1.2, -0.4])
    np.testing.assert_allclose(singular_residuals(singular_seed_i(r), r, 0.4, 1.0), 0.0, atol=1e-15)


def test_propagate_zero_time():
    i0, r0 = np.array([0.1, 0.2, 0.3]), np.array([-0.2, 0.5, 0.1])
    i, r = propagate_ir(i0, r0, lambda t, i, r: (1.5, 1.0), 0.0)
    np.testing.assert_array_equal(i, i0)
    np.testing.assert_array_equal(r, r0)


def test_r_part_matches_closed_form_under_bang():
    r0 = np.array([0.3, 1.1, -0.2])
    prot = ControlProtocol([Arc("regular", 1.2, delta=1.5), Arc("regular", 0.8, delta=-1.5)])
    _, r = propagate_ir(np.zeros(3), r0, prot, 2.0, h=1e-3)
    mid = propagate_regular(RegularArc(1.5, 1.0, r0), 1.2)
    ref = propagate_regular(RegularArc(-1.5, 1.0, mid), 0.8)
    np.testing.assert_allclose(r, ref, atol=1e-8)


def test_switching_derivatives_by_finite_differences():
    i0, r0 = np.array([0.4, -0.3, 0.25]), np.array([0.2, 0.7, -0.5])
    d, o = -1.5, 1.0
    (_, _), (ts, ys) = propagate_ir(i0, r0, lambda t, i, r: (d, o), 1.0, h=1e-4, record_every=1)
    h = ts[1] - ts[0]
    k = len(ts) // 2
    iz = ys[:, 2]
    phi_o = ys[:, 0] + ys[:, 3]
    der = switching_derivatives(_pt(ys[k, :3], ys[k, 3:], d, o))
    assert (iz[k + 1] - iz[k - 1]) / (2 * h) == pytest.approx(der["dphi_delta"], abs=1e-7)
    assert (iz[k + 1] - 2 * iz[k] + iz[k - 1]) / h**2 == pytest.approx(der["ddphi_delta"], abs=1e-5)
    assert (phi_o[k + 1] - phi_o[k - 1]) / (2 * h) == pytest.approx(der["dphi_omega"], abs=1e-7)
    assert (phi_o[k + 1] - 2 * phi_o[k] + phi_o[k - 1]) / h**2 == pytest.approx(der["ddphi_omega"], abs=1e-5)


def test_hamiltonian_piecewise_conserved_and_switch_jump():
    i0, r0 = np.array([0.4, -0.3, 0.25]), np.array([0.2, 0.7, -0.5])
    prot = ControlProtocol([Arc("regular", 0.9, delta=1.5), Arc("regular", 1.3, delta=-1.5)])
    (_, _), (ts, ys) = propagate_ir(i0, r0, prot, 2.2, h=1e-3, record_every=10)
    d, o = prot.controls(ts)
    hp = np.array([pontryagin_h(_pt(y[:3], y[3:], dd, oo)) for y, dd, oo in zip(ys, d, o)])
    first, second = ts < 0.9 - 1e-12, ts >= 0.9 - 1e-12
    assert np.ptp(hp[first]) < 1e-7
    assert np.ptp(hp[second]) < 1e-7
    # the jump is -(delta_after - delta_before) Iz / 2 at the switch
    k = int(np.argmax(second))
    assert hp[k] - hp[k - 1] == pytest.approx(-0.5 * (-3.0) * ys[k, 2], abs=1e-7)


def test_singular_feedback_keeps_residuals_small():
    r0 = np.array([0.3002237, 1.12045, 0.0])
    arc = singular_arc_from_initial(r0)
    (i, r), (ts, ys) = propagate_ir(
        singular_seed_i(r0), r0, lambda t, i, r: (-r[2], 1.0), arc.period, h=1e-3, record_every=20
    )
    res = np.array([singular_residuals(y[:3], y[3:], -y[5], 1.0) for y in ys])
    assert np.max(np.abs(res)) < 1e-6


def test_singular_feedback_along_protocol_arc():
    r0 = np.array([0.5, -0.8, 0.3])
    arc = singular_arc_from_initial(r0)
    prot = ControlProtocol([Arc("singular", arc.period, r0=tuple(r0))])
    i, r = propagate_ir(singular_seed_i(r0), r0, prot, arc.period, h=1e-3)
    np.testing.assert_allclose(singular_residuals(i, r, -r[2], 1.0), 0.0, atol=1e-6)
    np.testing.assert_allclose(r, r0, atol=1e-8)


def test_protocol_shorter_than_horizon_rejected():
    prot = ControlProtocol([Arc("regular", 1.0, delta=1.5)])
    with pytest.raises(ValueError):
        propagate_ir(np.zeros(3), np.ones(3), prot, 2.0)
    with pytest.raises(ValueError):
        propagate_ir(np.zeros(3), np.ones(3), prot, 0.5, h=0.0)


def test_omega_witness():
    iz, rz, om = omega_singular_witness(1.5)
    assert (iz, rz, om) == pytest.approx((-4 / 3, 2 / 3, 0.0))
    with pytest.raises(ValueError):
        omega_singular_witness(0.0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.2, 3.0), st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_omega_witness_residuals_vanish(delta0, rx, ry):
    res = omega_witness_residuals(delta0, rx, ry)
    for key in ("phi_omega", "dphi_omega", "ddphi_omega", "h_p"):
        assert res[key] == pytest.approx(0.0, abs=1e-12)
