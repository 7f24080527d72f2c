"""Necessary condition to robustness: the running integral of ``Rx``.

Closed forms are given for singular arcs (through ``Pi(m; u, m)``), for bang
arcs and for one bang arc followed by a singular arc. A composite
Gauss-Legendre rule is kept alongside as an independent referee.
"""

from __future__ import annotations

import math

import numpy as np

from . import elliptic
from .rspace import (
    RegularArc,
    SingularArc,
    propagate_regular,
    singular_arc_from_initial,
)

__all__ = [
    "ncr_singular",
    "ncr_regular",
    "ncr_concat",
    "concat_singular_arc",
    "gauss_legendre_integral",
]


def ncr_singular(arc: SingularArc, t):
    """``int_0^t Rx`` along a singular arc.

    ``Rx = E_s + s2/2 - (s2/2) nd^2(u)`` and ``int nd^2 = Pi(m; u, m)``, so
    the integral is exact; large ``u`` is handled by the quasi-periodicity
    of ``E(u, m)`` inside :func:`elliptic.pi_mm`.
    """
    t = np.asarray(t, dtype=float)
    uf = arc.a_rate * t + arc.u0
    jump = np.asarray(elliptic.pi_mm(uf, arc.m)) - np.asarray(elliptic.pi_mm(arc.u0, arc.m))
    val = (arc.es + 0.5 * arc.s2) * t - arc.s2 / (2.0 * arc.a_rate) * jump
    return float(val) if np.ndim(val) == 0 else val


def ncr_regular(arc: RegularArc, t):
    """``int_0^t Rx`` along a bang arc.

    Integrating ``exp(M0 t) R0`` term by term gives::

        Rx0 t + (d/w^3)(sin wt - wt)(d Rx0 + o Rz0) + (d/w^2)(1 - cos wt) Ry0
    """
    t = np.asarray(t, dtype=float)
    rx0, ry0, rz0 = np.asarray(arc.r0, dtype=float)
    d, o = arc.delta, arc.omega
    w = arc.w
    if w == 0:
        val = rx0 * t
    else:
        wt = w * t
        val = (
            rx0 * t
            + d / w**3 * (np.sin(wt) - wt) * (d * rx0 + o * rz0)
            + d / w**2 * (1.0 - np.cos(wt)) * ry0
        )
    return float(val) if np.ndim(val) == 0 else val


def concat_singular_arc(reg: RegularArc, t_s: float, *, strict: bool = True) -> SingularArc:
    """Singular arc seeded at the end of ``reg`` after time ``t_s``."""
    return singular_arc_from_initial(propagate_regular(reg, t_s), strict=strict)


def ncr_concat(reg: RegularArc, t_s: float, t_f: float) -> float:
    """``int_0^{t_f} Rx`` for a bang arc on ``[0, t_s]`` then a singular arc."""
    if not 0.0 <= t_s <= t_f:
        raise ValueError(f"need 0 <= t_s <= t_f, got t_s={t_s}, t_f={t_f}")
    head = ncr_regular(reg, t_s)
    if t_f == t_s:
        return head
    arc = concat_singular_arc(reg, t_s)
    return head + ncr_singular(arc, t_f - t_s)


_GL_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def gauss_legendre_integral(fn, t0: float, t1: float, *, segment: float = 0.25, nodes: int = 64) -> float:
    """Composite Gauss-Legendre quadrature of a vectorized ``fn`` over ``[t0, t1]``."""
    if t1 == t0:
        return 0.0
    if nodes not in _GL_CACHE:
        _GL_CACHE[nodes] = np.polynomial.legendre.leggauss(nodes)
    x, w = _GL_CACHE[nodes]
    n_seg = max(1, math.ceil(abs(t1 - t0) / segment))
    edges = np.linspace(t0, t1, n_seg + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[:-1] + edges[1:])
    pts = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    vals = np.asarray(fn(pts), dtype=float).reshape(n_seg, nodes)
    return float(np.sum(half * (vals @ w)))
