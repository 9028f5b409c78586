"""Exceptions raised by `nibm`.

Every exception carries the process exit status and a stable machine code
used by the command line to build its JSON error object.
"""

from __future__ import annotations

from typing import Any


class NibmError(Exception):
    """Base class for all errors raised by `nibm`."""

    exit_code: int = 1
    """Exit status used by the command line."""
    code: str = "nibm-error"
    """Stable machine-readable code."""

    def __init__(self, message: str, **params: Any) -> None:
        """Initialize the error.

        Parameters:
            message: A human-readable message.
            **params: Parameters that led to the error, echoed in the JSON error object.
        """
        super().__init__(message)
        self.message = message
        self.params = params

    def as_dict(self) -> dict[str, Any]:
        """Return the JSON error object.

        Returns:
            A dictionary with `code`, `message` and `params` keys.
        """
        return {"code": self.code, "message": self.message, "params": self.params}


class ParameterError(NibmError):
    """The parameters are outside the domain of an operation."""

    exit_code = 2
    code = "parameter-error"


class DomainError(ParameterError):
    """A value lies outside the domain of an operation."""

    code = "domain-error"


class CriticalTimeError(ParameterError):
    """The time is too close to a critical time."""

    code = "critical-time"


class CriticalSeparationError(ParameterError):
    """The product `a * b` is too close to one half."""

    code = "critical-separation"


class PoleError(ParameterError):
    """The rational parameter is too close to a pole."""

    code = "pole"


class NumericalError(NibmError):
    """A numerical procedure failed."""

    exit_code = 3
    code = "numerical-error"


class ClassificationError(NumericalError):
    """Roots could not be classified as real or purely imaginary."""

    code = "classification"


class PathError(NumericalError):
    """Analytic continuation of the sheet labels failed."""

    code = "path"


class PrecisionError(NumericalError):
    """The working precision is too low for the requested system."""

    code = "precision"


class EdgeFitError(NumericalError):
    """The fitted exponent at a density edge is not one half."""

    code = "edge-fit"


class InfeasibleError(NibmError):
    """Rejection sampling cannot reach the requested sample count."""

    exit_code = 4
    code = "infeasible"
