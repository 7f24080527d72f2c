"""Piecewise control schedules (bang, singular feedback replay, sampled)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import BranchError, DomainError
from .rspace import (
    negez_arc_from_initial,
    propagate_negez,
    propagate_singular,
    singular_arc_from_initial,
)

__all__ = ["Arc", "ControlProtocol"]

KINDS = ("regular", "singular", "sampled")


@dataclass
class Arc:
    """One control segment in local time ``[0, duration]``.

    ``regular``: constant ``(delta, omega)``.
    ``singular``: ``omega`` at its bound and ``delta = -omega0^2 Rz(t)`` replayed
    from the analytic arc through ``r0``.
    ``sampled``: piecewise-linear ``delta``/``omega`` on the local grid ``times``.
    """

    kind: str
    duration: float
    delta: float = 0.0
    omega: float = 1.0
    r0: tuple[float, float, float] | None = None
    times: np.ndarray | None = None
    deltas: np.ndarray | None = None
    omegas: np.ndarray | None = None
    _flow: Any = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown arc kind {self.kind!r}")
        if not np.isfinite(self.duration) or self.duration < 0:
            raise DomainError(f"arc duration must be finite and >= 0, got {self.duration}")
        if self.kind == "singular":
            if self.r0 is None:
                raise DomainError("singular arc needs its starting R-vector")
            r0 = np.asarray(self.r0, dtype=float)
            try:
                arc = singular_arc_from_initial(r0)
                self._flow = lambda t: propagate_singular(arc, t)
            except BranchError:
                arc = negez_arc_from_initial(r0)
                self._flow = lambda t: propagate_negez(arc, t)
        if self.kind == "sampled":
            self.times = np.asarray(self.times, dtype=float)
            self.deltas = np.asarray(self.deltas, dtype=float)
            self.omegas = np.asarray(self.omegas, dtype=float)
            if not (self.times.shape == self.deltas.shape == self.omegas.shape):
                raise DomainError("sampled arc arrays must share one shape")
            if self.times.size < 1 or np.any(np.diff(self.times) <= 0):
                raise DomainError("sampled arc needs strictly increasing times")

    def r_at(self, t):
        """R-vector along a singular arc at local time(s) ``t``."""
        if self.kind != "singular":
            raise DomainError("R is only replayed on singular arcs")
        return self._flow(t)

    def controls(self, t, omega0: float = 1.0):
        t = np.asarray(t, dtype=float)
        if self.kind == "regular":
            return np.full(t.shape, self.delta), np.full(t.shape, self.omega)
        if self.kind == "singular":
            rz = self._flow(t)[2]
            return -(omega0**2) * rz, np.full(t.shape, self.omega)
        return (
            np.interp(t, self.times, self.deltas),
            np.interp(t, self.times, self.omegas),
        )

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"kind": self.kind, "duration": float(self.duration)}
        if self.kind == "regular":
            out.update(delta=float(self.delta), omega=float(self.omega))
        elif self.kind == "singular":
            out.update(omega=float(self.omega), r0=[float(x) for x in self.r0])
        else:
            out.update(
                times=self.times.tolist(),
                deltas=self.deltas.tolist(),
                omegas=self.omegas.tolist(),
            )
        return out

    @classmethod
    def from_dict(cls, d: dict) -> Arc:
        kind = d.get("kind")
        if kind == "regular":
            return cls("regular", float(d["duration"]), delta=float(d["delta"]), omega=float(d.get("omega", 1.0)))
        if kind == "singular":
            return cls("singular", float(d["duration"]), omega=float(d.get("omega", 1.0)), r0=tuple(d["r0"]))
        if kind == "sampled":
            return cls(
                "sampled",
                float(d["duration"]),
                times=d["times"],
                deltas=d["deltas"],
                omegas=d["omegas"],
            )
        raise DomainError(f"unknown arc kind {kind!r}")


@dataclass
class ControlProtocol:
    arcs: list[Arc]
    omega0: float = 1.0
    delta0: float = 1.5

    @property
    def duration(self) -> float:
        return float(sum(a.duration for a in self.arcs))

    @property
    def starts(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum([a.duration for a in self.arcs])[:-1]])

    def controls(self, t):
        """``(delta, omega)`` at global time(s) ``t``; a switch instant belongs to the later arc."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        delta = np.zeros_like(t)
        omega = np.zeros_like(t)
        if not self.arcs:
            return delta, omega
        starts = self.starts
        idx = np.clip(np.searchsorted(starts, t, side="right") - 1, 0, len(self.arcs) - 1)
        for k, arc in enumerate(self.arcs):
            sel = idx == k
            if np.any(sel):
                local = np.clip(t[sel] - starts[k], 0.0, arc.duration)
                delta[sel], omega[sel] = arc.controls(local, self.omega0)
        return delta, omega

    def sample(self, rate: float):
        """Rows ``(t, delta, omega)`` at ``t_i = min(i rate, t_f)``, ``i = 0..ceil(t_f/rate)``."""
        if rate <= 0:
            raise DomainError("sample rate must be positive")
        tf = self.duration
        if tf == 0:
            return np.zeros((0, 3))
        n = int(np.ceil(tf / rate - 1e-9))
        t = np.minimum(np.arange(n + 1) * rate, tf)
        t[-1] = tf  # a remainder below the rounding slack is folded into the last row
        delta, omega = self.controls(t)
        return np.column_stack([t, delta, omega])

    def bound_excess(self, samples: int = 2001) -> tuple[float, float]:
        """Largest ``|delta| - delta0`` and ``|omega| - omega0`` seen on a fine grid."""
        if self.duration == 0:
            return (-self.delta0, -self.omega0)
        t = np.linspace(0.0, self.duration, samples)
        delta, omega = self.controls(t)
        return (float(np.max(np.abs(delta)) - self.delta0), float(np.max(np.abs(omega)) - self.omega0))

    def within_bounds(self, tol: float = 1e-9) -> bool:
        dx, ox = self.bound_excess()
        return dx <= tol and ox <= tol

    def to_dict(self) -> dict:
        return {
            "omega0": float(self.omega0),
            "delta0": float(self.delta0),
            "arcs": [a.to_dict() for a in self.arcs],
        }

    @classmethod
    def from_dict(cls, d: dict) -> ControlProtocol:
        try:
            arcs = [Arc.from_dict(a) for a in d["arcs"]]
        except (KeyError, TypeError, ValueError) as exc:
            raise DomainError(f"malformed protocol: {exc}") from exc
        return cls(arcs, omega0=float(d.get("omega0", 1.0)), delta0=float(d.get("delta0", 1.5)))

    @classmethod
    def from_waveform(cls, t, delta, omega, *, omega0: float = 1.0, delta0: float = 1.5) -> ControlProtocol:
        t = np.asarray(t, dtype=float)
        if t.size == 0:
            return cls([], omega0=omega0, delta0=delta0)
        if t[0] != 0.0:
            raise DomainError("waveform must start at t = 0")
        arc = Arc("sampled", float(t[-1]), times=t, deltas=delta, omegas=omega)
        return cls([arc], omega0=omega0, delta0=delta0)

    @classmethod
    def pi_pulse(cls) -> ControlProtocol:
        """Resonant reference pulse: ``delta = 0``, ``omega = 1`` for ``t = pi``."""
        return cls([Arc("regular", float(np.pi), delta=0.0, omega=1.0)])
