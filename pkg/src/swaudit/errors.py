"""Semantic exception hierarchy shared by all swaudit modules."""

from __future__ import annotations


class AuditError(Exception):
    """Base class for every error raised by this package."""


class ParameterError(AuditError, ValueError):
    """An argument violates its contract (range, sign, missing field)."""


class DomainError(AuditError, ValueError):
    """A numeric input lies outside the mathematical domain of the operation."""


class ShapeError(AuditError, ValueError):
    """Array arguments have incompatible shapes or lengths."""


class SizeError(AuditError, ValueError):
    """A combinatorial or factorial budget would be exceeded."""


class NumericError(AuditError, ArithmeticError):
    """A numeric routine failed to converge or produced non-finite values."""

    def __init__(self, message: str, achieved_tol: float | None = None):
        super().__init__(message)
        self.achieved_tol = achieved_tol


class BackendUnavailableError(AuditError, RuntimeError):
    """No quantile/CDF backend can serve the requested law or direction."""


class ConfigurationError(AuditError, ValueError):
    """An experiment or ensemble configuration is inconsistent."""


class InvariantError(AuditError, AssertionError):
    """An assertion-grade internal invariant failed (CLI exit code 2)."""
