"""Exception and warning types shared across the package."""

from dataclasses import dataclass
from typing import Any


class NvdressError(Exception):
    """Base exception for all nvdress errors."""


class DomainError(NvdressError, ValueError):
    """Raised when an argument lies outside an operation's domain."""


@dataclass(frozen=True)
class Violation:
    """A single violated invariant."""

    field: str
    value: Any
    message: str

    def __str__(self) -> str:
        return f"{self.field}={self.value!r}: {self.message}"


class ModelValidationError(NvdressError):
    """Raised when a model bundle breaks one or more invariants."""

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"{len(self.violations)} invalid model field(s):\n{lines}")


class ConfigError(NvdressError):
    """Raised for unreadable or malformed configuration and tables."""


class NumericalError(NvdressError):
    """Raised when an integration or optimization cannot produce a trustworthy result."""


class FitError(NumericalError):
    """Raised when a fit is rejected or fails."""

    def __init__(self, message: str, parameter: str | None = None):
        super().__init__(message)
        self.parameter = parameter


class ResolutionWarning(UserWarning):
    """Grid spacing is too coarse for the narrowest feature."""


class RwaValidityWarning(UserWarning):
    """The neglected dressed cross-coupling is no longer small."""


class OverlapWarning(UserWarning):
    """Two strong ladder peaks overlap within a few linewidths."""


class DegenerateLineWarning(UserWarning):
    """A steady-state population was evaluated at the 0/0 point."""


class OutputExistsError(NvdressError):
    """Raised when an output file exists and overwriting was not requested."""
