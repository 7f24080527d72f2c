"""Propagation of the reduced R-vector under singular and bang controls.

Units are scaled so that the Rabi bound is 1: ``R`` is multiplied by
``Omega0`` and time by ``Omega0``. On a singular arc the detuning is the
feedback ``Delta_s = -Rz`` and the flow is::

    Rx' = -Rz Ry,   Ry' = Rz Rx - Rz,   Rz' = Ry

which conserves ``|R|^2``, ``E_s = Rx + Rz^2/2`` and the one-dimensional
energy ``E_z = Ry^2/2 + (1 - E_s) Rz^2/2 + Rz^4/8``. For ``E_z > 0`` the
solution is a Jacobi ``sd`` oscillation; for ``E_z < 0`` (only possible when
``E_s > 1``) it is an ``nd`` oscillation that never changes sign.

Arc constructors accept a single vector of shape ``(3,)`` or a batch of shape
``(3, n)``; with ``strict=False`` invalid batch entries become NaN instead of
raising.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import elliptic
from .errors import BranchError, DomainError, NoSolutionError

__all__ = [
    "AdjointParams",
    "SingularArc",
    "NegEzArc",
    "RegularArc",
    "reduced_matrix",
    "singular_constants",
    "singular_arc_from_initial",
    "propagate_singular",
    "negez_arc_from_initial",
    "propagate_negez",
    "propagate_regular",
    "singular_control",
    "r_from_state",
]


@dataclass(frozen=True)
class AdjointParams:
    """Constant adjoints of the robustness integrals: ``p_f = p1 + i p2`` and ``p_e``."""

    p1: float
    p2: float
    pe: float = 0.0

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p1, self.p2, self.pe)


def reduced_matrix(delta, omega) -> np.ndarray:
    """Generator of ``R' = M R`` for controls ``(delta, omega)``."""
    return np.array(
        [[0.0, delta, 0.0], [-delta, 0.0, -omega], [0.0, omega, 0.0]], dtype=float
    )


def singular_constants(r) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(E_s, E_z)`` of the singular flow at point(s) ``r``."""
    rx, ry, rz = np.asarray(r, dtype=float)
    es = rx + 0.5 * rz * rz
    ez = 0.5 * ry * ry + 0.5 * (1.0 - es) * rz * rz + 0.125 * rz**4
    return es, ez


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


@dataclass(frozen=True)
class SingularArc:
    """Constants of one ``E_z > 0`` singular trajectory.

    ``r2`` and ``-s2`` are the roots of ``x^2 + 4(1 - E_s)x - 8E_z``; the
    time-to-argument map is ``u = a_rate * t + u0`` with
    ``a_rate = sqrt(r2 + s2)/2``. The sign of ``Ry`` at the start is carried
    by ``rs_signed``.
    """

    es: float
    ez: float
    r2: float
    s2: float
    m: float
    a_rate: float
    u0: float
    rs_signed: float

    @property
    def quarter(self):
        """``K(m)``."""
        return elliptic.complete_k(self.m)

    @property
    def period(self):
        """Time for one full oscillation of ``Rz`` (``4K/A``)."""
        return 4.0 * np.asarray(self.quarter) / self.a_rate

    def time_to(self, u_final):
        """Time at which the elliptic argument reaches ``u_final``."""
        return (np.asarray(u_final) - self.u0) / self.a_rate

    def __call__(self, t):
        return propagate_singular(self, t)


def singular_arc_from_initial(r0, *, strict: bool = True) -> SingularArc:
    """Build the singular arc through ``r0``.

    Raises
    ------
    BranchError
        If ``E_z <= 0`` (the arc would be of ``nd`` type or degenerate).
    """
    r0 = np.asarray(r0, dtype=float)
    rx, ry, rz = r0
    es, ez = singular_constants(r0)
    invalid = ~(ez > 0)
    if strict and np.any(invalid):
        raise BranchError(f"singular arc needs E_z > 0, got E_z = {ez}", ez=ez)

    with np.errstate(invalid="ignore", divide="ignore"):
        ez_ok = np.where(invalid, np.nan, ez)
        d = np.hypot(1.0 - rx, ry)
        q = 1.0 - es
        big = 2.0 * np.abs(q) + 2.0 * d
        small = 8.0 * ez_ok / big
        r2 = np.where(q >= 0, small, big)
        s2 = np.where(q >= 0, big, small)
        if strict and np.any(r2 <= 0):
            raise DomainError("degenerate singular arc (r^2 <= 0)")
        m = r2 / (r2 + s2)
        a_rate = np.sqrt(0.25 * (r2 + s2))
        sign = np.where(ry < 0, -1.0, 1.0)
        rs = sign * np.sqrt(r2 * s2)
        x = 2.0 * a_rate / rs * rz
        m_safe = np.where(np.isfinite(m), m, 0.5)
        xmax = 1.0 / np.sqrt(1.0 - m_safe)
        x = np.where(np.isfinite(x), np.clip(x, -xmax, xmax), 0.0)
        u0 = np.where(invalid, np.nan, elliptic.inverse_sd(x, m_safe))
    return SingularArc(
        es=_out(es),
        ez=_out(ez),
        r2=_out(r2),
        s2=_out(s2),
        m=_out(m),
        a_rate=_out(a_rate),
        u0=_out(u0),
        rs_signed=_out(rs),
    )


def propagate_singular(arc: SingularArc, t) -> np.ndarray:
    """``R(t)`` on a singular arc; shape ``(3,) + broadcast(t, arc).shape``."""
    u = arc.a_rate * np.asarray(t, dtype=float) + arc.u0
    m = np.where(np.isfinite(arc.m), arc.m, 0.5)
    sn, cn, dn = (np.asarray(x) for x in elliptic.jacobi(u, m))
    nd2 = 1.0 / (dn * dn)
    rx = arc.es + 0.5 * arc.s2 - 0.5 * arc.s2 * nd2
    ry = 0.5 * arc.rs_signed * cn * nd2
    rz = arc.rs_signed / (2.0 * arc.a_rate) * sn / dn
    return np.array(np.broadcast_arrays(rx, ry, rz))


@dataclass(frozen=True)
class NegEzArc:
    """Constants of an ``E_z < 0`` singular trajectory (requires ``E_s > 1``).

    ``o2 > q2 > 0`` are the roots of ``x^2 + 4(1 - E_s)x - 8E_z``; ``Rz``
    oscillates between ``q`` and ``o`` without changing sign, as
    ``Rz = q_signed nd(u, m)`` with ``m = (o2 - q2)/o2`` and ``u = (o/2) t + u0``.
    """

    es: float
    ez: float
    o2: float
    q2: float
    m: float
    rate: float
    u0: float
    q_signed: float

    @property
    def period(self):
        return 2.0 * elliptic.complete_k(self.m) / self.rate


def negez_arc_from_initial(r0) -> NegEzArc:
    r0 = np.asarray(r0, dtype=float)
    rx, ry, rz = r0
    es, ez = singular_constants(r0)
    es, ez = float(es), float(ez)
    if ez >= 0:
        raise BranchError(f"nd-type arc needs E_z < 0, got {ez}", ez=ez)
    if es <= 1.0:
        raise NoSolutionError(
            f"E_z < 0 with E_s = {es} <= 1: both roots negative, no real trajectory"
        )
    root = float(np.hypot(1.0 - rx, ry))
    o2 = 2.0 * ((es - 1.0) + root)
    q2 = -8.0 * ez / o2
    m = (o2 - q2) / o2
    q = np.sqrt(q2)
    y = abs(rz) / q
    y = min(max(y, 1.0), 1.0 / np.sqrt(1.0 - m))
    u0 = elliptic.inverse_nd(y, m)
    if ry * rz < 0:
        u0 = -u0
    return NegEzArc(
        es=es,
        ez=ez,
        o2=o2,
        q2=q2,
        m=m,
        rate=float(0.5 * np.sqrt(o2)),
        u0=float(u0),
        q_signed=float(np.copysign(q, rz)),
    )


def propagate_negez(arc: NegEzArc, t) -> np.ndarray:
    u = arc.rate * np.asarray(t, dtype=float) + arc.u0
    sn, cn, dn = (np.asarray(x) for x in elliptic.jacobi(u, arc.m))
    rz = arc.q_signed / dn
    ry = arc.q_signed * arc.rate * arc.m * sn * cn / (dn * dn)
    rx = arc.es - 0.5 * rz * rz
    return np.array(np.broadcast_arrays(rx, ry, rz))


@dataclass(frozen=True)
class RegularArc:
    """Bang arc with constant ``(delta, omega)`` starting at ``r0``."""

    delta: float
    omega: float
    r0: np.ndarray

    @property
    def w(self) -> float:
        return float(np.hypot(self.delta, self.omega))

    @property
    def energy(self):
        """Conserved ``E_r = delta Rz - omega Rx``."""
        r0 = np.asarray(self.r0)
        return self.delta * r0[2] - self.omega * r0[0]

    def __call__(self, t):
        return propagate_regular(self, t)


def propagate_regular(arc: RegularArc, t) -> np.ndarray:
    """``exp(M0 t) R0`` by the Rodrigues-type closed form (period ``2 pi / w``)."""
    t = np.asarray(t, dtype=float)
    mat = reduced_matrix(arc.delta, arc.omega)
    r0 = np.asarray(arc.r0, dtype=float)
    w = arc.w
    mr = np.tensordot(mat, r0, axes=1)
    m2r = np.tensordot(mat, mr, axes=1)
    if w == 0:
        return np.multiply.outer(r0, np.ones_like(t)) if t.ndim else r0.copy()
    c = (1.0 - np.cos(w * t)) / w**2
    s = np.sin(w * t) / w
    return (
        np.multiply.outer(r0, np.ones_like(t))
        + np.multiply.outer(m2r, c)
        + np.multiply.outer(mr, s)
    )


def singular_control(r, omega0: float = 1.0):
    """Singular detuning ``-omega0^2 Rz``."""
    return -(omega0**2) * np.asarray(r, dtype=float)[2]


def r_from_state(a, b, adj: AdjointParams, *, tol: float = 1e-10) -> np.ndarray:
    """Project a state ``(a, b)`` and the adjoints onto R-space.

    Linear in ``(p1, p2, pe)``; the three coefficient vectors are orthonormal
    for a normalized state, so ``|R|^2 = p1^2 + p2^2 + pe^2``.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    norm = np.abs(a) ** 2 + np.abs(b) ** 2
    if np.any(np.abs(norm - 1.0) > tol):
        raise DomainError("state must be normalized to use it as an R-space point")
    dif = a * a - b * b
    tot = a * a + b * b
    ab = a * b
    cab = np.conj(a) * b
    p1, p2, pe = adj.as_tuple()
    rx = dif.real * p1 - dif.imag * p2 + 2.0 * cab.real * pe
    ry = -tot.imag * p1 - tot.real * p2 + 2.0 * cab.imag * pe
    rz = -2.0 * ab.real * p1 + 2.0 * ab.imag * p2 + (np.abs(a) ** 2 - np.abs(b) ** 2) * pe
    return np.array([rx, ry, rz])
