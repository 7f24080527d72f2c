"""Robust control of a two-level system by singular extremals.

Submodules:
    elliptic         Jacobi functions, complete/incomplete integrals, inverses
    rspace           the reduced R-vector dynamics and its closed-form flows
    ncr              non-robustness functional for singular and regular arcs
    extremal         Pontryagin structure (switching functions, I-R flow)
    shooting         candidate search for the transfer, half-transfer, Not gate
    verify           Schrodinger integration, fidelities, alpha sweeps
    appendix_models  Euler-angle and first-order geometric cross-checks
    cli              the ``pulseforge`` command
"""

from __future__ import annotations

from .errors import (
    BranchError,
    DomainError,
    IntegrationError,
    NoSolutionError,
    PoleError,
    PulseForgeError,
)
from .protocol import Arc, ControlProtocol
from .rspace import AdjointParams
from .shooting import (
    CandidateSolution,
    SolveReport,
    solve_complete_transfer,
    solve_concat,
    solve_half_transfer,
    solve_not_gate,
)
from .verify import QubitState, integrate, robustness_sweep

__version__ = "0.1.0"

__all__ = [
    "AdjointParams",
    "Arc",
    "BranchError",
    "CandidateSolution",
    "ControlProtocol",
    "DomainError",
    "IntegrationError",
    "NoSolutionError",
    "PoleError",
    "PulseForgeError",
    "QubitState",
    "SolveReport",
    "integrate",
    "robustness_sweep",
    "solve_complete_transfer",
    "solve_concat",
    "solve_half_transfer",
    "solve_not_gate",
]
