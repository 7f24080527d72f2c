"""Pontryagin structure in R-space: coupled (I, R) flow, H_P and switching functions.

Scaled units. With ``M`` the R-space generator for ``(delta, omega)`` and
``N = [[0, 0, 0], [0, 0, -1], [0, 1, 0]]`` the reduced extremal flow is::

    R' = M R,    I' = M I + omega N R

and the pseudo-Hamiltonian is ``H_P = (-delta Iz + omega Ix + omega Rx)/2 - 1``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .ode import rk4
from .protocol import ControlProtocol
from .rspace import reduced_matrix

__all__ = [
    "PontryaginPoint",
    "pontryagin_h",
    "switching_functions",
    "switching_derivatives",
    "singular_seed_i",
    "singular_residuals",
    "ir_rhs",
    "propagate_ir",
    "omega_singular_witness",
    "omega_witness_residuals",
]

_N = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, -1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class PontryaginPoint:
    i: np.ndarray
    r: np.ndarray
    delta: float
    omega: float


def pontryagin_h(p: PontryaginPoint) -> float:
    ix, _, iz = p.i
    rx = p.r[0]
    return 0.5 * (-p.delta * iz + p.omega * ix + p.omega * rx) - 1.0


def switching_functions(p: PontryaginPoint) -> tuple[float, float]:
    """``(phi_delta, phi_omega) = (Iz, Ix + Rx)``."""
    return float(p.i[2]), float(p.i[0] + p.r[0])


def switching_derivatives(p: PontryaginPoint) -> dict[str, float]:
    """First and second time derivatives of both switching functions at constant controls."""
    ix, iy, iz = p.i
    rx, ry, rz = p.r
    d, o = p.delta, p.omega
    return {
        "dphi_delta": o * (iy + ry),
        "ddphi_delta": -d * o * (ix + rx) - o * o * (iz + 2.0 * rz),
        "dphi_omega": d * (iy + ry),
        "ddphi_omega": -d * d * (ix + rx) - d * o * (iz + 2.0 * rz),
    }


def singular_seed_i(r, omega0: float = 1.0) -> np.ndarray:
    """The I-vector forced on a detuning-singular arc: ``Iz = 0``, ``Iy = -Ry``, ``Ix = 2/omega0 - Rx``."""
    rx, ry, _ = np.asarray(r, dtype=float)
    return np.array([2.0 / omega0 - rx, -ry, 0.0])


def singular_residuals(i, r, delta, omega) -> np.ndarray:
    """``(phi_delta, dphi_delta, H_P)``; all vanish on a singular arc."""
    p = PontryaginPoint(np.asarray(i), np.asarray(r), delta, omega)
    return np.array(
        [switching_functions(p)[0], switching_derivatives(p)["dphi_delta"], pontryagin_h(p)]
    )


def ir_rhs(delta, omega):
    mat = reduced_matrix(delta, omega)
    return np.block([[mat, omega * _N], [np.zeros((3, 3)), mat]])


def _feedback_rhs(law: Callable):
    def rhs(t, y):
        i, r = y[:3], y[3:]
        delta, omega = law(t, i, r)
        return ir_rhs(delta, omega) @ y

    return rhs


def propagate_ir(i0, r0, controls, t: float, h: float = 1e-3, *, record_every: int = 0):
    """RK4 integration of the coupled (I, R) system up to time ``t``.

    ``controls`` is either a :class:`ControlProtocol` (arc boundaries are
    hit exactly, singular arcs replay their analytic detuning) or a feedback
    callable ``law(t, i, r) -> (delta, omega)``.

    Returns ``(i, r)`` at ``t``; with ``record_every`` also the sampled
    trajectory as ``(ts, ys)`` with ``ys[:, :3] = I`` and ``ys[:, 3:] = R``.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    y = np.concatenate([np.asarray(i0, float), np.asarray(r0, float)])
    if isinstance(controls, ControlProtocol):
        segments = []
        start = 0.0
        for arc in controls.arcs:
            stop = min(start + arc.duration, t)
            if stop > start:
                segments.append((start, stop, arc))
            start += arc.duration
            if start >= t:
                break
        if start < t:
            raise ValueError("propagation time exceeds the protocol duration")

        def law_for(arc, t0):
            def law(tt, i, r):
                d, o = arc.controls(np.array(tt - t0), controls.omega0)
                return float(d), float(o)

            return law
    else:
        segments = [(0.0, t, None)]

    ts_all, ys_all = [0.0], [y.copy()]
    for t0, t1, arc in segments:
        rhs = _feedback_rhs(controls if arc is None else law_for(arc, t0))
        if record_every:
            ts, ys = rk4(rhs, y, t0, t1, h, record_every=record_every)
            ts_all.extend(ts[1:])
            ys_all.extend(ys[1:])
            y = ys[-1]
        else:
            y = rk4(rhs, y, t0, t1, h)
    if record_every:
        return (y[:3], y[3:]), (np.array(ts_all), np.array(ys_all))
    return y[:3], y[3:]


def omega_singular_witness(delta0: float) -> tuple[float, float, float]:
    """The only point where a Rabi-singular arc could sit: ``(Iz, Rz, omega_s) = (-2/delta0, 1/delta0, 0)``.

    A zero Rabi frequency leaves the transfer uncontrollable, which rules out
    Rabi-singular arcs in time-optimal protocols.
    """
    if delta0 <= 0:
        raise ValueError("delta0 must be positive")
    return -2.0 / delta0, 1.0 / delta0, 0.0


def omega_witness_residuals(delta0: float, rx: float = 0.3, ry: float = -0.2) -> dict[str, float]:
    """Switching residuals at the witness point with ``Ix = -Rx``, ``Iy = -Ry``."""
    iz, rz, omega = omega_singular_witness(delta0)
    p = PontryaginPoint(np.array([-rx, -ry, iz]), np.array([rx, ry, rz]), delta0, omega)
    der = switching_derivatives(p)
    return {
        "phi_omega": switching_functions(p)[1],
        "dphi_omega": der["dphi_omega"],
        "ddphi_omega": der["ddphi_omega"],
        "h_p": pontryagin_h(p),
    }
