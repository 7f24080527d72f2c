"""Two independent formulations used to cross-check the R-space solutions.

Euler-angle singular flow
    A state ``(a, b) = (cos(theta/2) e^{i phi/2}, sin(theta/2) e^{-i phi/2}) e^{-i gamma/2}``
    obeys ``theta' = sin phi``, ``phi' = delta + cos phi cot theta`` and
    ``gamma' = cos phi / sin theta`` (``omega = 1``). With ``gamma`` as the
    clock, the detuning-singular extremals satisfy one second-order equation
    for ``theta(gamma)``; its adjoints ``(P1, P2)`` relate to the R-space
    ones by ``P1 = p2``, ``P2 = -p1``.

First-order geometric model
    In the interaction picture the order-alpha error curve ``x1 + i y1``
    moves with unit speed along direction ``(sin phi, -cos phi)`` where
    ``phi' = delta``. Bang arcs are circles of radius ``1/delta0``, singular
    arcs straight lines.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import PoleError
from .ncr import gauss_legendre_integral
from .protocol import ControlProtocol
from .rspace import AdjointParams

__all__ = [
    "POLE_EPS",
    "EulerPoint",
    "RioTrajectory",
    "rio_adjoints",
    "rio_rhs",
    "integrate_rio",
    "euler_from_state",
    "rio_residual_along",
    "G1Point",
    "geometric_bang",
    "geometric_singular",
    "geometric_hamiltonian",
    "geometric_p_phi",
    "geometric_switch_times",
    "GeometricSequence",
    "bang_singular_bang",
    "geometric_report",
    "rio_report",
]

POLE_EPS = 1e-6


# --------------------------------------------------------------------------
# Euler-angle singular flow


@dataclass(frozen=True)
class EulerPoint:
    theta: float
    phi: float
    gamma: float
    dtheta: float


@dataclass
class RioTrajectory:
    gamma: np.ndarray
    theta: np.ndarray
    dtheta: np.ndarray
    t: np.ndarray
    delta_s: np.ndarray
    truncated: bool = False
    reason: str = ""


def rio_adjoints(adj: AdjointParams) -> tuple[float, float]:
    """Angular-chart adjoints ``(P1, P2)`` matching R-space ``(p1, p2)``."""
    return adj.p2, -adj.p1


def _coef(gamma, p1, p2):
    return p1 * np.sin(gamma) - p2 * np.cos(gamma)


def rio_rhs(p: EulerPoint, p1: float, p2: float) -> float:
    """``d^2 theta / d gamma^2`` on a singular extremal with chart adjoints ``(p1, p2)``."""
    s, c = np.sin(p.theta), np.cos(p.theta)
    if abs(s) < POLE_EPS:
        raise PoleError(f"theta = {p.theta} is within {POLE_EPS} of a pole")
    d2 = p.dtheta * p.dtheta
    return float(_coef(p.gamma, p1, p2) * (s * s + d2) ** 1.5 + c * s + 2.0 * d2 * c / s)


def integrate_rio(start: EulerPoint, p1: float, p2: float, gamma_f: float, h: float = 1e-3) -> RioTrajectory:
    """RK4 in ``gamma`` for ``(theta, theta', t)``.

    Time follows from ``dt/dgamma = sqrt(sin^2 theta + theta'^2)`` (``omega = 1``,
    ``cos phi > 0``). The singular detuning ``sin theta (p1 sin gamma - p2 cos gamma)``
    is recorded at each node. Integration stops early, with ``truncated`` set
    and a ``reason``, once ``sin theta`` falls to about ``2e-4`` (the chart
    would then need steps below ``1e-6 h``) or ``theta`` leaves
    ``(POLE_EPS, pi - POLE_EPS)``.
    """
    if h <= 0:
        raise ValueError("step must be positive")
    if not POLE_EPS <= start.theta <= np.pi - POLE_EPS:
        raise PoleError("start point violates the pole exclusion")

    def rhs(g, y):
        th, dth, _ = y
        s = np.sin(th)
        if abs(s) < POLE_EPS:
            raise PoleError("pole reached")
        dd = rio_rhs(EulerPoint(th, 0.0, g, dth), p1, p2)
        return np.array([dth, dd, np.sqrt(s * s + dth * dth)])

    # The flow steepens near the poles: steps shrink like sin(theta)^2 and stay
    # well short of the remaining distance to the chart edge.
    direction = 1.0 if gamma_f >= start.gamma else -1.0
    g = start.gamma
    y = np.array([start.theta, start.dtheta, 0.0])
    gs, ys = [g], [y.copy()]
    truncated, reason = False, ""
    while direction * (gamma_f - g) > 1e-14:
        scale = min(1.0, (5.0 * np.sin(y[0])) ** 2)
        if scale < 1e-6:
            truncated, reason = True, f"pole approached at gamma = {g:.6g}, theta = {y[0]:.6g}"
            break
        step = direction * min(h * scale, abs(gamma_f - g))
        room = min(y[0], np.pi - y[0]) - POLE_EPS
        if abs(y[1] * step) > 0.25 * room:
            step = direction * 0.25 * room / abs(y[1])
        if abs(step) < 1e-15:
            truncated, reason = True, f"step underflow at gamma = {g:.6g}, theta = {y[0]:.6g}"
            break
        try:
            k1 = rhs(g, y)
            k2 = rhs(g + 0.5 * step, y + 0.5 * step * k1)
            k3 = rhs(g + 0.5 * step, y + 0.5 * step * k2)
            k4 = rhs(g + step, y + step * k3)
        except PoleError as exc:
            truncated, reason = True, f"stopped at gamma = {g:.6g}: {exc}"
            break
        y_new = y + step / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        if not np.all(np.isfinite(y_new)) or abs(y_new[1]) > 1e8:
            # cos(phi) -> 0: gamma stops advancing and the chart slope diverges
            truncated, reason = True, f"theta' diverged at gamma = {g:.6g} (gamma no longer monotone)"
            break
        if not POLE_EPS < y_new[0] < np.pi - POLE_EPS:
            truncated, reason = True, f"theta left the chart at gamma = {g + step:.6g}"
            break
        y = y_new
        g = g + step
        gs.append(g)
        ys.append(y.copy())
    gs = np.array(gs)
    ys = np.array(ys)
    return RioTrajectory(
        gamma=gs,
        theta=ys[:, 0],
        dtheta=ys[:, 1],
        t=ys[:, 2],
        delta_s=np.sin(ys[:, 0]) * _coef(gs, p1, p2),
        truncated=truncated,
        reason=reason,
    )


def _fill_poles(x, bad):
    # Angles are undefined where an amplitude vanishes; carry the nearest defined value.
    if not np.any(bad) or np.all(bad):
        return x
    idx = np.arange(x.size)
    good = idx[~bad]
    nearest = good[np.clip(np.searchsorted(good, idx), 0, good.size - 1)]
    out = x.copy()
    out[bad] = x[nearest[bad]]
    return out


def euler_from_state(a, b) -> EulerPoint:
    """Euler angles of a state or of a trajectory (arrays), unwrapped by continuity.

    ``dtheta`` is ``d theta / d gamma = tan(phi) sin(theta)``.
    """
    a = np.atleast_1d(np.asarray(a, dtype=complex))
    b = np.atleast_1d(np.asarray(b, dtype=complex))
    theta = 2.0 * np.arctan2(np.abs(b), np.abs(a))
    bad = (np.abs(a) < 1e-300) | (np.abs(b) < 1e-300)
    arg_a, arg_b = np.angle(a), np.angle(b)
    phi = np.unwrap(_fill_poles(arg_a - arg_b, bad))
    gamma = np.unwrap(_fill_poles(-(arg_a + arg_b), bad))
    with np.errstate(divide="ignore", invalid="ignore"):
        dtheta = np.tan(phi) * np.sin(theta)
    if theta.size == 1:
        return EulerPoint(float(theta[0]), float(phi[0]), float(gamma[0]), float(dtheta[0]))
    return EulerPoint(theta, phi, gamma, dtheta)


def rio_residual_along(
    a, b, delta, p1: float, p2: float, *, min_sin: float = 0.05, min_cos: float = 0.05
) -> np.ndarray:
    """Residual of the second-order singular equation along a simulated trajectory.

    ``theta''`` is rebuilt exactly from the chart equations and the applied
    detuning ``delta``, then compared with :func:`rio_rhs`. Points with
    ``sin theta < min_sin`` (poles) or ``|cos phi| < min_cos`` (fold, where
    ``gamma`` stops advancing) are skipped: the chart is singular there and
    roundoff in the state is amplified without bound.
    """
    ep = euler_from_state(a, b)
    th, ph, ga = ep.theta, ep.phi, ep.gamma
    delta = np.asarray(delta, dtype=float)
    keep = (np.sin(th) >= min_sin) & (np.abs(np.cos(ph)) >= min_cos)
    th, ph, ga, delta = th[keep], ph[keep], ga[keep], delta[keep]
    s, c = np.sin(th), np.cos(th)
    cp = np.cos(ph)
    th_dot = np.sin(ph)
    ph_dot = delta + cp * c / s
    ga_dot = cp / s
    d1 = np.tan(ph) * s
    d2 = (ph_dot * s / cp**2 + np.tan(ph) * c * th_dot) / ga_dot
    model = _coef(ga, p1, p2) * (s * s + d1 * d1) ** 1.5 + c * s + 2.0 * d1 * d1 * c / s
    return d2 - model


# --------------------------------------------------------------------------
# first-order geometric model


@dataclass(frozen=True)
class G1Point:
    x1: float
    y1: float
    x2: float
    y2: float
    phi: float
    p_phi: float = 0.0


def _second_order(x1f, y1f, phif, t):
    def dx2(s):
        return -np.cos(phif(s)) * y1f(s) + np.sin(phif(s)) * x1f(s)

    def dy2(s):
        return np.cos(phif(s)) * x1f(s) + np.sin(phif(s)) * y1f(s)

    return gauss_legendre_integral(dx2, 0.0, t, segment=0.1), gauss_legendre_integral(dy2, 0.0, t, segment=0.1)


def geometric_bang(start: G1Point, eps_sign: int, delta0: float, t: float, adj=(0.0, 0.0)) -> G1Point:
    """Bang arc ``delta = eps_sign * delta0`` for time ``t``.

    ``adj = (p1, q1)`` are the constant adjoints of ``(x1, y1)``, needed only
    to advance ``p_phi``.
    """
    if delta0 <= 0:
        raise ValueError("delta0 must be positive")
    rate = np.sign(eps_sign) * delta0
    phi0 = start.phi

    def phif(s):
        return phi0 + rate * s

    def x1f(s):
        return start.x1 - (np.cos(phif(s)) - np.cos(phi0)) / rate

    def y1f(s):
        return start.y1 - (np.sin(phif(s)) - np.sin(phi0)) / rate

    dx2, dy2 = _second_order(x1f, y1f, phif, t)
    p1, q1 = adj
    phi = phif(t)
    p_phi = start.p_phi - p1 * (np.sin(phi) - np.sin(phi0)) / rate + q1 * (np.cos(phi) - np.cos(phi0)) / rate
    return G1Point(float(x1f(t)), float(y1f(t)), start.x2 + dx2, start.y2 + dy2, float(phi), float(p_phi))


def geometric_singular(start: G1Point, phi_s: float, t: float, adj=None) -> G1Point:
    """Straight segment with ``delta = 0`` and ``phi = phi_s``.

    When ``adj = (p1, q1)`` is given it must lie on the unit circle, the only
    place singular arcs exist.
    """
    if adj is not None and abs(np.hypot(*adj) - 1.0) > 1e-9:
        raise ValueError("singular arcs need p1^2 + q1^2 = 1")
    s, c = np.sin(phi_s), np.cos(phi_s)
    x10, y10 = start.x1, start.y1
    return G1Point(
        x10 + s * t,
        y10 - c * t,
        start.x2 + (s * x10 - c * y10) * t + 0.5 * t * t,
        start.y2 + (c * x10 + s * y10) * t,
        float(phi_s),
        start.p_phi,
    )


def geometric_hamiltonian(p: G1Point, adj, delta: float) -> float:
    p1, q1 = adj
    return float(p1 * np.sin(p.phi) - q1 * np.cos(p.phi) + p.p_phi * delta - 1.0)


def geometric_p_phi(t, p_phi0: float, theta_adj: float, delta0: float, rho: float = 1.0):
    """``p_phi0 - (rho/delta0) cos(delta0 t - theta_adj)`` on a ``+delta0`` arc from ``phi = 0``."""
    return p_phi0 - rho / delta0 * np.cos(delta0 * np.asarray(t) - theta_adj)


def geometric_switch_times(p_phi0: float, theta_adj: float, delta0: float, horizon: float) -> list[float]:
    """Zeros of :func:`geometric_p_phi` (unit adjoint norm) in ``[0, horizon]``."""
    if delta0 <= 0:
        raise ValueError("delta0 must be positive")
    arg = p_phi0 * delta0
    if abs(arg) > 1.0:
        return []
    eta = float(np.arccos(arg))
    period = 2.0 * np.pi / delta0
    out = set()
    for base in (theta_adj + eta, theta_adj - eta):
        t0 = (base / delta0) % period
        k = 0
        while t0 + k * period <= horizon + 1e-12:
            out.add(round(t0 + k * period, 13))
            k += 1
    return sorted(float(x) for x in out)


@dataclass
class GeometricSequence:
    arcs: list[tuple[str, float]]
    points: list[G1Point]
    adj: tuple[float, float]
    phi_f: float
    theta_f: float

    @property
    def final(self) -> G1Point:
        return self.points[-1]

    @property
    def duration(self) -> float:
        return float(sum(d for _, d in self.arcs))


def bang_singular_bang(delta0: float = 1.5) -> GeometricSequence:
    """A closed order-one robust sequence: bang, straight segment, bang.

    The first ``+delta0`` arc runs from ``phi = 0`` to ``3 pi / 2`` and
    reaches ``(1, 1)/delta0``; a segment of length ``2/delta0`` along ``-x``
    follows; the final ``+delta0`` arc closes the curve at the origin with
    ``phi_f = 3 pi`` (so ``theta_f = 3 pi / 2``). The adjoints
    ``(p1, q1) = (-1, 0)`` make the segment singular and ``p_phi(0) = 1/delta0``
    puts the switch on the zero of ``p_phi``.
    """
    adj = (-1.0, 0.0)
    phi_s = 1.5 * np.pi
    t1 = phi_s / delta0
    seg = 2.0 / delta0
    t3 = 1.5 * np.pi / delta0
    p0 = G1Point(0.0, 0.0, 0.0, 0.0, 0.0, 1.0 / delta0)
    p1 = geometric_bang(p0, +1, delta0, t1, adj)
    # p_phi vanishes at the switch; snap the roundoff so the segment is exactly singular.
    p1 = replace(p1, p_phi=0.0, phi=phi_s)
    p2 = geometric_singular(p1, phi_s, seg, adj)
    p3 = geometric_bang(p2, +1, delta0, t3, adj)
    return GeometricSequence(
        arcs=[("bang+", t1), ("singular", seg), ("bang+", t3)],
        points=[p0, p1, p2, p3],
        adj=adj,
        phi_f=p3.phi,
        theta_f=0.5 * p3.phi,
    )


def geometric_report(delta0: float = 1.5, samples: int = 64) -> dict:
    """Closure and Hamiltonian checks for :func:`bang_singular_bang`."""
    seq = bang_singular_bang(delta0)
    adj = seq.adj
    h_max = 0.0
    start = seq.points[0]
    for (kind, dur), end in zip(seq.arcs, seq.points[1:]):
        for t in np.linspace(0.0, dur, samples):
            if kind == "singular":
                pt = geometric_singular(start, end.phi, t)
                h = geometric_hamiltonian(pt, adj, 0.0)
            else:
                pt = geometric_bang(start, +1, delta0, t, adj)
                h = geometric_hamiltonian(pt, adj, delta0)
            h_max = max(h_max, abs(h))
        start = end
    fin = seq.final
    return {
        "delta0": float(delta0),
        "duration": seq.duration,
        "closure": float(np.hypot(fin.x1, fin.y1)),
        "phi_f": float(seq.phi_f),
        "theta_f": float(seq.theta_f),
        "phase_mismatch": float(abs(seq.phi_f - 2.0 * seq.theta_f)),
        "hamiltonian_max": float(h_max),
        "x2": float(fin.x2),
        "y2": float(fin.y2),
    }


def rio_report(protocol: ControlProtocol, adj: AdjointParams, *, h: float = 1e-4, seed_theta: float = 1e-3) -> dict:
    """Map a verified transfer into the Euler chart and compare both formulations.

    The chart flow is seeded from the mapped trajectory at the first sample
    with ``theta >= seed_theta`` and run to the last sample before the target
    pole or the first fold of the chart, whichever comes first.
    """
    from .verify import integrate

    tr = integrate(protocol, h=h)
    delta, _ = protocol.controls(tr.t)
    ep = euler_from_state(tr.a, tr.b)
    p1, p2 = rio_adjoints(adj)
    res = rio_residual_along(tr.a, tr.b, delta, p1, p2)
    law = np.sin(ep.theta) * _coef(ep.gamma, p1, p2)
    k = int(np.argmax(ep.theta >= seed_theta))
    # stop where gamma ceases to increase: past a fold theta is not a function of gamma
    stall = np.flatnonzero(np.diff(ep.gamma[k:]) <= 0)
    kend = len(tr.t) - 2 if stall.size == 0 else min(len(tr.t) - 2, k + int(stall[0]))
    start = EulerPoint(float(ep.theta[k]), float(ep.phi[k]), float(ep.gamma[k]), float(ep.dtheta[k]))
    run = integrate_rio(start, p1, p2, float(ep.gamma[kend]), h=h)
    main_theta = np.interp(run.gamma, ep.gamma[k : kend + 1], ep.theta[k : kend + 1])
    # compare away from the fold: there d theta / d gamma is unbounded
    s_run = np.sin(run.theta)
    cos_phi = s_run / np.hypot(s_run, run.dtheta)
    away = cos_phi >= 0.05
    return {
        "p1_chart": float(p1),
        "p2_chart": float(p2),
        "residual_max": float(np.max(np.abs(res))),
        "detuning_max_error": float(np.max(np.abs(law - delta)[1:-1])),
        "theta_max_error": float(np.max(np.abs(run.theta - main_theta)[away])),
        "theta_start": float(run.theta[0]),
        "theta_end": float(run.theta[-1]),
        "gamma_end": float(run.gamma[-1]),
        "truncated": bool(run.truncated),
        "reason": run.reason,
    }
