"""Schrodinger-level verification of control protocols.

The two-level system in scaled units evolves as ``i psi' = H psi`` with::

    H = 1/2 [[-delta, (1 + alpha) omega], [(1 + alpha) omega, delta]]

Integration is classical RK4. Because the system is linear, one RK4 step is a
fixed 2x2 matrix built from ``H`` at the step start, midpoint and end; the
per-step matrices of a whole protocol are formed in one vectorized pass and
chained by a parallel prefix product. Steps are aligned to arc boundaries so
the bang/singular discontinuities never fall inside a step.

Alongside the state, the nominal robustness integrals

    E(t) = int omega Re(conj(a) b)      F(t) = int (omega/2)(a^2 - b^2)

are accumulated with the same RK4 weights.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import IntegrationError
from .protocol import ControlProtocol

__all__ = [
    "QubitState",
    "Trajectory",
    "SweepResult",
    "GROUND",
    "EXCITED",
    "NOT_TARGET",
    "PI_PULSE_QUADRATIC",
    "integrate",
    "final_state",
    "fidelity_state",
    "population_transfer",
    "fidelity_gate",
    "merit",
    "robustness_sweep",
    "check_robustness_conditions",
    "write_sweep_csv",
]

DEFAULT_STEP = 1e-4
NORM_TOL = 1e-7
# Infidelity of the resonant pi pulse is sin^2(pi alpha / 2) ~ (pi^2/4) alpha^2.
PI_PULSE_QUADRATIC = math.pi**2 / 4.0


@dataclass(frozen=True)
class QubitState:
    a: complex
    b: complex

    @property
    def vector(self) -> np.ndarray:
        return np.array([self.a, self.b], dtype=complex)

    @property
    def norm2(self) -> float:
        return abs(self.a) ** 2 + abs(self.b) ** 2

    @classmethod
    def from_vector(cls, v) -> QubitState:
        return cls(complex(v[0]), complex(v[1]))


GROUND = QubitState(1.0 + 0j, 0j)
EXCITED = QubitState(0j, 1.0 + 0j)
# Target of the Not gate -i sigma_x applied to the ground state.
NOT_TARGET = QubitState(0j, -1j)


@dataclass
class Trajectory:
    t: np.ndarray
    a: np.ndarray
    b: np.ndarray
    e_int: np.ndarray
    f_int: np.ndarray

    @property
    def final(self) -> QubitState:
        return QubitState(complex(self.a[-1]), complex(self.b[-1]))


@dataclass
class SweepResult:
    alphas: np.ndarray
    infidelities: np.ndarray
    fitted_quadratic_coeff: float
    fitted_loglog_slope: float
    nominal: float


def _generator(delta, omega, alpha):
    # A(t) with psi' = A psi, A = -i H; shapes broadcast over leading axes.
    delta = np.asarray(delta, dtype=float)
    coup = (1.0 + np.asarray(alpha, dtype=float)[..., None]) * omega
    delta = np.broadcast_to(delta, coup.shape)
    out = np.empty(coup.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = 0.5j * delta
    out[..., 1, 1] = -0.5j * delta
    out[..., 0, 1] = -0.5j * coup
    out[..., 1, 0] = -0.5j * coup
    return out


def _stage_controls(protocol: ControlProtocol, h: float):
    """Controls at the three RK4 abscissae of each step, each evaluated within its own arc."""
    starts, hs = [], []
    d_rows, o_rows = [], []
    t0 = 0.0
    for arc in protocol.arcs:
        if arc.duration > 0:
            n = max(1, math.ceil(arc.duration / h - 1e-9))
            hk = arc.duration / n
            local = hk * np.arange(n)
            stages = np.stack([local, local + 0.5 * hk, np.minimum(local + hk, arc.duration)])
            d, o = arc.controls(stages, protocol.omega0)
            d_rows.append(d)
            o_rows.append(o)
            starts.append(t0 + local)
            hs.append(np.full(n, hk))
        t0 += arc.duration
    if not starts:
        return np.zeros(0), np.zeros(0), np.zeros((3, 0)), np.zeros((3, 0))
    return (
        np.concatenate(starts),
        np.concatenate(hs),
        np.concatenate(d_rows, axis=1),
        np.concatenate(o_rows, axis=1),
    )


def _step_matrices(h, delta, omega, alphas):
    """RK4 propagation matrices; leading axes ``(n_alpha, n_steps)``.

    Returns ``P`` together with the stage maps ``S2, S3, S4`` (stage state =
    ``S_k @ y_n``), which the functional accumulation reuses.
    """
    a1 = _generator(delta[0], omega[0], alphas)
    a2 = _generator(delta[1], omega[1], alphas)
    a4 = _generator(delta[2], omega[2], alphas)
    hh = h[None, :, None, None]
    eye = np.eye(2, dtype=complex)
    k1 = a1
    s2 = eye + 0.5 * hh * k1
    k2 = a2 @ s2
    s3 = eye + 0.5 * hh * k2
    k3 = a2 @ s3
    s4 = eye + hh * k3
    k4 = a4 @ s4
    p = eye + hh / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return p, s2, s3, s4


def _prefix_products(p: np.ndarray) -> np.ndarray:
    """Inclusive scan ``C_i = P_i ... P_0`` along axis -3 (Hillis-Steele)."""
    c = p.copy()
    n = c.shape[-3]
    d = 1
    while d < n:
        c[..., d:, :, :] = c[..., d:, :, :] @ c[..., :-d, :, :]
        d *= 2
    return c


def _total_product(p: np.ndarray) -> np.ndarray:
    """``P_{n-1} ... P_0`` along axis -3 by pairwise reduction."""
    eye = np.eye(2, dtype=complex)
    while p.shape[-3] > 1:
        if p.shape[-3] % 2:
            pad = np.broadcast_to(eye, p.shape[:-3] + (1, 2, 2))
            p = np.concatenate([p, pad], axis=-3)
        p = p[..., 1::2, :, :] @ p[..., 0::2, :, :]
    return p[..., 0, :, :]


def _check_norm(norm2):
    drift = float(np.max(np.abs(norm2 - 1.0))) if np.size(norm2) else 0.0
    if drift > NORM_TOL:
        raise IntegrationError(f"norm drift {drift:.3g} exceeds {NORM_TOL:g}; reduce the step")


def integrate(
    protocol: ControlProtocol,
    psi0: QubitState = GROUND,
    alpha: float = 0.0,
    h: float = DEFAULT_STEP,
) -> Trajectory:
    """Integrate the protocol and accumulate ``E`` and ``F`` along the way."""
    if h <= 0:
        raise ValueError("step must be positive")
    starts, hs, dd, oo = _stage_controls(protocol, h)
    y0 = psi0.vector
    if starts.size == 0:
        return Trajectory(
            t=np.zeros(1),
            a=np.array([y0[0]]),
            b=np.array([y0[1]]),
            e_int=np.zeros(1),
            f_int=np.zeros(1, dtype=complex),
        )
    p, s2, s3, s4 = _step_matrices(hs, dd, oo, np.array([alpha]))
    p, s2, s3, s4 = p[0], s2[0], s3[0], s4[0]
    c = _prefix_products(p)
    ys = np.concatenate([y0[None, :], c @ y0], axis=0)
    _check_norm(np.sum(np.abs(ys) ** 2, axis=1))

    yn = ys[:-1]
    stage = [yn, (s2 @ yn[..., None])[..., 0], (s3 @ yn[..., None])[..., 0], (s4 @ yn[..., None])[..., 0]]
    om = [oo[0], oo[1], oo[1], oo[2]]

    def e_dens(y, w):
        return w * np.real(np.conj(y[:, 0]) * y[:, 1])

    def f_dens(y, w):
        return 0.5 * w * (y[:, 0] ** 2 - y[:, 1] ** 2)

    wts = (1.0, 2.0, 2.0, 1.0)
    de = hs / 6.0 * sum(wk * e_dens(y, w) for wk, y, w in zip(wts, stage, om))
    df = hs / 6.0 * sum(wk * f_dens(y, w) for wk, y, w in zip(wts, stage, om))
    t = np.concatenate([[0.0], starts + hs])
    return Trajectory(
        t=t,
        a=ys[:, 0],
        b=ys[:, 1],
        e_int=np.concatenate([[0.0], np.cumsum(de)]),
        f_int=np.concatenate([[0j], np.cumsum(df)]),
    )


def final_state(
    protocol: ControlProtocol,
    psi0: QubitState = GROUND,
    alphas=0.0,
    h: float = DEFAULT_STEP,
    *,
    chunk: int = 8,
):
    """Final state(s) only, for one ``alpha`` or an array of them.

    Returns a :class:`QubitState` for scalar ``alpha``, else an array of shape
    ``(n_alpha, 2)``.
    """
    scalar = np.ndim(alphas) == 0
    alphas = np.atleast_1d(np.asarray(alphas, dtype=float))
    starts, hs, dd, oo = _stage_controls(protocol, h)
    y0 = psi0.vector
    if starts.size == 0:
        out = np.tile(y0, (alphas.size, 1))
    else:
        parts = []
        for i in range(0, alphas.size, chunk):
            p, _, _, _ = _step_matrices(hs, dd, oo, alphas[i : i + chunk])
            parts.append(_total_product(p) @ y0)
        out = np.concatenate(parts, axis=0)
    _check_norm(np.sum(np.abs(out) ** 2, axis=1))
    return QubitState.from_vector(out[0]) if scalar else out


def fidelity_state(psi: QubitState, target: QubitState) -> float:
    """``|<target|psi>|^2``."""
    return float(abs(np.vdot(target.vector, psi.vector)) ** 2)


def population_transfer(psi: QubitState) -> float:
    """Phase-free transfer fidelity ``|b|^2``."""
    return float(abs(psi.b) ** 2)


def fidelity_gate(psi: QubitState) -> float:
    """``Re<(0, -i)|psi> = -Im b`` for the Not gate started from the ground state."""
    return float(-np.imag(psi.b))


def merit(fidelity: float, floor: float = 1e-16) -> float:
    """``-log10(1 - fidelity)``, with the infidelity floored at ``floor``."""
    return float(-np.log10(max(1.0 - fidelity, floor)))


def _infidelity_fn(target):
    if target is None or target == "excited":
        return lambda v: 1.0 - np.abs(v[:, 1]) ** 2
    if target == "not-gate":
        return lambda v: 1.0 + np.imag(v[:, 1])
    if isinstance(target, QubitState):
        tv = target.vector
        return lambda v: 1.0 - np.abs(v @ np.conj(tv)) ** 2
    raise ValueError(f"unknown target {target!r}")


def robustness_sweep(
    protocol: ControlProtocol,
    alpha_max: float = 0.2,
    n: int = 21,
    *,
    psi0: QubitState = GROUND,
    target="excited",
    h: float = DEFAULT_STEP,
) -> SweepResult:
    """Infidelity versus the relative Rabi error ``alpha``.

    The sweep grid is ``n`` points on ``[-alpha_max, alpha_max]``. The alpha^2
    coefficient comes from a quartic fit on nine points in ``|alpha| <= 0.02``
    and the log-log slope from eight points in ``[0.005, 0.05]``; both use
    their own samples so they do not depend on ``n``.

    ``target`` is ``"excited"`` (population transfer), ``"not-gate"``, a
    :class:`QubitState`, or ``"nominal"`` (the protocol's own output at
    ``alpha = 0``).
    """
    if alpha_max < 0 or alpha_max > 0.3:
        raise ValueError("alpha_max must lie in [0, 0.3]")
    if alpha_max > 0 and n < 5:
        raise ValueError("need at least 5 sweep points")
    if target == "nominal":
        target = final_state(protocol, psi0, 0.0, h)
    infid = _infidelity_fn(target)

    grid = np.array([0.0]) if alpha_max == 0 else np.linspace(-alpha_max, alpha_max, n)
    fit_q = np.linspace(-0.02, 0.02, 9)
    fit_s = np.geomspace(0.005, 0.05, 8)
    alls = np.concatenate([grid, fit_q, fit_s, [0.0]])
    vals = np.clip(infid(final_state(protocol, psi0, alls, h)), 0.0, 1.0)
    ng = grid.size
    sweep = vals[:ng]
    q = vals[ng : ng + 9]
    s = vals[ng + 9 : ng + 17]
    nominal = float(vals[-1])

    coeffs = np.polynomial.polynomial.polyfit(fit_q, q, 4)
    slope = float(np.polyfit(np.log10(fit_s), np.log10(np.maximum(s, 1e-300)), 1)[0])
    return SweepResult(
        alphas=grid,
        infidelities=sweep,
        fitted_quadratic_coeff=float(coeffs[2]),
        fitted_loglog_slope=slope,
        nominal=nominal,
    )


def check_robustness_conditions(traj: Trajectory) -> tuple[float, float]:
    """``(|F(t_f)|, |E(t_f)|)``; state transfer needs only the first to vanish."""
    return float(abs(traj.f_int[-1])), float(abs(traj.e_int[-1]))


def write_sweep_csv(path, result: SweepResult) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "infidelity"])
        for a, v in zip(result.alphas, result.infidelities):
            w.writerow([f"{a:.15g}", f"{v:.15g}"])
