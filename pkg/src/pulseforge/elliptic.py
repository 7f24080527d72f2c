"""Jacobi elliptic functions and the elliptic integrals needed by the NCR.

All functions take the parameter ``m`` (not the modulus ``k = sqrt(m)``) and
accept scalars or numpy arrays that broadcast together. Scalars in give
Python floats out.

Conventions
-----------
``incomplete_e(u, m)`` is the second-kind integral in the argument ``u``,
``E(u, m) = int_0^u dn^2(v, m) dv`` (= Legendre ``E(am u | m)``). With it the
third-kind integral at characteristic ``m`` reduces exactly to::

    Pi(m; u, m) = (E(u, m) - m sn cn / dn) / (1 - m) = int_0^u nd^2(v, m) dv

Accuracy is about 1e-14 absolute for ``m <= 0.99`` and degrades like
``1/(1 - m)`` above that.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import elliprd, elliprf

from .errors import DomainError

__all__ = [
    "JacobiTriple",
    "jacobi",
    "sd",
    "nd",
    "complete_k",
    "complete_e",
    "incomplete_e",
    "pi_mm",
    "inverse_sd",
    "inverse_nd",
]

_AGM_TOL = 4e-16
_AGM_MAXITER = 30
_SERIES_M = 1e-12


class JacobiTriple(NamedTuple):
    sn: float | np.ndarray
    cn: float | np.ndarray
    dn: float | np.ndarray


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def _check_m(m) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if not np.all(np.isfinite(m)) or np.any(m < 0.0) or np.any(m >= 1.0):
        raise DomainError(f"elliptic parameter must satisfy 0 <= m < 1, got {m}")
    return m


def _agm(m: np.ndarray):
    """Run the AGM started at (1, sqrt(1-m)); return a_N and the c_n, a_n lists."""
    a = np.ones_like(m)
    b = np.sqrt(1.0 - m)
    c = np.sqrt(m)
    cs = [c]
    as_ = [a]
    for _ in range(_AGM_MAXITER):
        if np.all(np.abs(c) <= _AGM_TOL):
            break
        a, b, c = 0.5 * (a + b), np.sqrt(a * b), 0.5 * (a - b)
        cs.append(c)
        as_.append(a)
    return a, cs, as_


def jacobi(u, m) -> JacobiTriple:
    """Return ``(sn, cn, dn)`` of ``u`` at parameter ``m`` via the descending AGM."""
    m = _check_m(m)
    u = np.asarray(u, dtype=float)
    u, m = np.broadcast_arrays(u, m)

    a_n, cs, as_ = _agm(m)
    n = len(cs) - 1
    phi = (2.0**n) * a_n * u
    for k in range(n, 0, -1):
        phi = 0.5 * (phi + np.arcsin(cs[k] / as_[k] * np.sin(phi)))
    sn = np.sin(phi)
    cn = np.cos(phi)

    small = m < _SERIES_M
    if np.any(small):
        s, c = np.sin(u), np.cos(u)
        corr = 0.25 * m * (u - s * c)
        sn = np.where(small, s - corr * c, sn)
        cn = np.where(small, c + corr * s, cn)
    dn = np.sqrt(1.0 - m * sn * sn)
    return JacobiTriple(_out(sn), _out(cn), _out(dn))


def sd(u, m):
    """``sn/dn``; odd, period ``4K(m)``."""
    sn, _, dn = jacobi(u, m)
    return _out(np.asarray(sn) / np.asarray(dn))


def nd(u, m):
    """``1/dn``; even, period ``2K(m)``."""
    _, _, dn = jacobi(u, m)
    return _out(1.0 / np.asarray(dn))


def complete_k(m):
    """Quarter period ``K(m) = pi / (2 AGM(1, sqrt(1-m)))``."""
    m = _check_m(m)
    a_n, _, _ = _agm(m)
    return _out(0.5 * np.pi / a_n)


def complete_e(m):
    """Complete second-kind integral ``E(m) = E(K(m), m)``."""
    m = _check_m(m)
    a_n, cs, _ = _agm(m)
    acc = np.zeros_like(m)
    for n, c in enumerate(cs):
        acc = acc + 2.0 ** (n - 1) * c * c
    return _out(0.5 * np.pi / a_n * (1.0 - acc))


def _legendre_e_from_triple(sn, cn, dn, m):
    # Carlson form of E(phi|m) with sin(phi)=sn, cos(phi)=cn >= 0.
    x, y = cn * cn, dn * dn
    return sn * elliprf(x, y, 1.0) - (m / 3.0) * sn**3 * elliprd(x, y, 1.0)


def incomplete_e(u, m):
    """``E(u, m) = int_0^u dn^2``, reduced to ``[-K, K]`` by quasi-periodicity."""
    m = _check_m(m)
    u = np.asarray(u, dtype=float)
    u, m = np.broadcast_arrays(u, m)
    k = np.asarray(complete_k(m))
    ec = np.asarray(complete_e(m))
    n = np.round(u / (2.0 * k))
    v = u - 2.0 * n * k
    sn, cn, dn = (np.asarray(x) for x in jacobi(v, m))
    cn = np.maximum(cn, 0.0)
    return _out(2.0 * n * ec + _legendre_e_from_triple(sn, cn, dn, m))


def pi_mm(u, m):
    """Third-kind integral ``Pi(m; u, m) = int_0^u nd^2`` by reduction to ``E``."""
    m = _check_m(m)
    sn, cn, dn = (np.asarray(x) for x in jacobi(u, m))
    e = np.asarray(incomplete_e(u, m))
    return _out((e - m * sn * cn / dn) / (1.0 - m))


def _incomplete_f_from_sn(sn, m):
    # F(arcsin(sn) | m) for sn in [-1, 1].
    s2 = sn * sn
    return sn * elliprf(1.0 - s2, 1.0 - m * s2, 1.0)


def inverse_sd(x, m):
    """Principal inverse of ``sd(., m)`` on ``[-K(m), K(m)]``.

    The closed form ``sn = x / sqrt(1 + m x^2)`` seeds a Newton polish; points
    where the polish does not verify fall back to bisection.
    """
    m = _check_m(m)
    x = np.asarray(x, dtype=float)
    x, m = np.broadcast_arrays(x, m)
    xmax = 1.0 / np.sqrt(1.0 - m)
    if np.any(np.abs(x) > xmax * (1.0 + 1e-12)):
        raise DomainError(f"sd^-1 argument out of range |x| <= {xmax}: {x}")
    x = np.clip(x, -xmax, xmax)

    sn = np.clip(x / np.sqrt(1.0 + m * x * x), -1.0, 1.0)
    u = _incomplete_f_from_sn(sn, m)
    for _ in range(2):
        s, c, d = (np.asarray(t) for t in jacobi(u, m))
        slope = c / (d * d)
        ok = np.abs(slope) > 1e-6
        step = np.where(ok, (s / d - x) / np.where(ok, slope, 1.0), 0.0)
        u = u - step

    k = np.asarray(complete_k(m))
    u = np.clip(u, -k, k)
    bad = np.abs(np.asarray(sd(u, m)) - x) > 1e-12 * np.maximum(1.0, np.abs(x))
    if np.any(bad):
        u = np.where(bad, _bisect_sd(x, m, k), u)
    return _out(u)


def _bisect_sd(x, m, k):
    lo, hi = -k.copy(), k.copy()
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        above = np.asarray(sd(mid, m)) > x
        hi = np.where(above, mid, hi)
        lo = np.where(above, lo, mid)
    return 0.5 * (lo + hi)


def inverse_nd(y, m):
    """Inverse of ``nd(., m)`` on ``[0, K(m)]``; requires ``1 <= y <= 1/sqrt(1-m)``."""
    m = _check_m(m)
    y = np.asarray(y, dtype=float)
    y, m = np.broadcast_arrays(y, m)
    ymax = 1.0 / np.sqrt(1.0 - m)
    tol = 1e-12
    if np.any(y < 1.0 - tol) or np.any(y > ymax * (1.0 + tol)):
        raise DomainError(f"nd^-1 argument out of range [1, {ymax}]: {y}")
    y = np.clip(y, 1.0, ymax)
    with np.errstate(invalid="ignore", divide="ignore"):
        s2 = np.where(m > 0, (1.0 - 1.0 / (y * y)) / np.where(m > 0, m, 1.0), 0.0)
    sn = np.sqrt(np.clip(s2, 0.0, 1.0))
    return _out(_incomplete_f_from_sn(sn, m))
