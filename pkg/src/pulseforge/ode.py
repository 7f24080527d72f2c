"""Fixed-step classical Runge-Kutta used as the in-repo referee for the closed forms."""

from __future__ import annotations

import math

import numpy as np


def rk4_step(rhs, t, y, h):
    k1 = rhs(t, y)
    k2 = rhs(t + 0.5 * h, y + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, y + 0.5 * h * k2)
    k4 = rhs(t + h, y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def rk4(rhs, y0, t0: float, t1: float, h: float, *, record_every: int = 0):
    """Integrate ``y' = rhs(t, y)`` from ``t0`` to ``t1`` with steps close to ``h``.

    The step is shrunk so an integer number of steps lands exactly on ``t1``.
    ``y0`` may carry extra trailing axes (a batch of initial conditions).

    Returns the final state, or ``(times, states)`` when ``record_every > 0``.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    y = np.array(y0, dtype=float if not np.iscomplexobj(y0) else complex)
    span = t1 - t0
    n = max(1, math.ceil(abs(span) / h - 1e-9)) if span != 0 else 0
    if n == 0:
        return (np.array([t0]), y[None]) if record_every else y
    step = span / n
    ts, ys = [t0], [y.copy()]
    for i in range(n):
        y = rk4_step(rhs, t0 + i * step, y, step)
        if record_every and ((i + 1) % record_every == 0 or i + 1 == n):
            ts.append(t0 + (i + 1) * step)
            ys.append(y.copy())
    if record_every:
        return np.array(ts), np.array(ys)
    return y


def singular_rhs(t, r):
    """Scaled singular flow ``R' = (-Rz Ry, Rz Rx - Rz, Ry)``."""
    rx, ry, rz = r
    return np.array([-rz * ry, rz * rx - rz, ry])


def linear_rhs(matrix):
    matrix = np.asarray(matrix, dtype=float)

    def rhs(t, r):
        return np.tensordot(matrix, r, axes=1)

    return rhs
