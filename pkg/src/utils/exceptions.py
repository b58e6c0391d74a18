"""Custom exception classes for the safe-initialization pipeline.

Provides specific exception types for the different failure scenarios of the
reachability solver, simulator, learner and artifact layer, each carrying a
context dictionary for diagnostics.
"""

from typing import Any


class SafeInitError(Exception):
    """Base exception for pipeline failures."""

    def __init__(self, message: str, context: dict[str, Any] | None = None):
        """Initialize pipeline error.

        Args:
            message: Error description
            context: Additional context for debugging (sweep counts, states, paths)
        """
        super().__init__(message)
        self.context = context or {}


class ConfigurationError(SafeInitError):
    """Configuration validation failure."""

    pass


class GridMismatchError(ConfigurationError):
    """Value grid was computed for different (v, omega_bar, Rc) parameters."""

    pass


class ValidationError(SafeInitError, ValueError):
    """Invalid argument passed to a library operation."""

    pass


class DimensionMismatchError(ValidationError):
    """Feature vector or scenario width does not match the model."""

    pass


class NumericalError(SafeInitError):
    """Numerical failure (CLI exit code 2)."""

    pass


class CFLViolationError(NumericalError):
    """Pseudo-time step exceeds the Lax-Friedrichs stability bound."""

    pass


class DivergenceError(NumericalError):
    """Level-set iteration is growing instead of settling."""

    pass


class ConvergenceError(NumericalError):
    """Pseudo-time budget exhausted before the residual fell below tolerance."""

    pass


class SimulationError(NumericalError):
    """Non-finite vehicle state encountered during simulation."""

    pass


class DegenerateDatasetError(SafeInitError):
    """Training data contains a single class."""

    pass


class ArtifactError(SafeInitError):
    """Artifact read or write failure."""

    pass


class ArtifactFormatError(ArtifactError):
    """Artifact content does not match its declared format."""

    pass


class ManifestError(ArtifactError):
    """Artifact hash does not match its manifest."""

    pass
