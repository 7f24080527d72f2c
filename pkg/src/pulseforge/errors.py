"""Exception types raised across the package."""

from __future__ import annotations


class PulseForgeError(Exception):
    """Base class for all package errors."""


class DomainError(PulseForgeError, ValueError):
    """An argument lies outside the domain of the requested function."""


class BranchError(PulseForgeError):
    """The singular flow at this point belongs to a different analytic branch.

    Raised when an arc with ``E_z > 0`` is requested but the initial point
    gives ``E_z <= 0``. The computed value is kept on ``ez``.
    """

    def __init__(self, message: str, ez: float):
        super().__init__(message)
        self.ez = ez


class NoSolutionError(PulseForgeError):
    """The requested trajectory does not exist for these constants."""


class IntegrationError(PulseForgeError):
    """A fixed-step integration drifted beyond its accuracy budget."""


class PoleError(PulseForgeError):
    """A polar-chart integration approached a coordinate singularity."""
