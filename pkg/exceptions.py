"""
VTSI Sim - Exceptions Module
Error hierarchy shared by model assembly, integrators and the scenario runner
"""

from typing import Optional


# ============================================================================
# BASE
# ============================================================================

class VtsiError(Exception):
    """Base class of every error raised by the simulation engine."""


# ============================================================================
# INPUT ERRORS
# ============================================================================

class ModelError(VtsiError, ValueError):
    """Raised when a bridge, train or constraint model cannot be built from its input."""


class ConfigError(VtsiError, ValueError):
    """Raised when a scenario configuration is malformed or combines incompatible options."""


# ============================================================================
# NUMERICAL ERRORS
# ============================================================================

class EigenSolverError(VtsiError):
    """Raised when the generalized eigenproblem fails or asks for too many modes."""


class SingularSystemError(VtsiError):
    """Raised when a coupling, Schur, KKT or step matrix is singular."""


class LcpRayTermination(VtsiError):
    """Raised when Lemke's method ends on a secondary ray or exceeds its pivot limit."""

    def __init__(self, message: str, iterations: int = 0):
        super().__init__(message)
        self.iterations = iterations


class IntegrationError(VtsiError):
    """
    Numerical failure inside a time-stepping loop.

    Wraps the original error with the scheme name, the step index and the
    simulated time at which it happened.
    """

    def __init__(self, scheme: str, step: int, t: float, cause: Optional[BaseException] = None):
        detail = f": {cause}" if cause is not None else ""
        super().__init__(f"{scheme} failed at step {step} (t = {t:.6g} s){detail}")
        self.scheme = scheme
        self.step = step
        self.t = t
        self.cause = cause
