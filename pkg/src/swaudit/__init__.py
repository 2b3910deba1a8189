"""swaudit: empirical audits of sliced-transport concentration.

A library and CLI harness for measuring how fast empirical measures approach
their source laws in the max-sliced Wasserstein-2 sense, together with the
machinery that estimate is built from: exact one-dimensional transport,
monotone-rearrangement profiles, extremal singular-value statistics,
scale-sensitive empirical-CDF bounds, and two-stage almost-Euclidean
embedding experiments.
"""

from __future__ import annotations

__version__ = "0.1.0"

from . import distributions, dkw, dvoretzky, harness, maxsliced, transport1d
from .errors import (
    AuditError,
    BackendUnavailableError,
    ConfigurationError,
    DomainError,
    InvariantError,
    NumericError,
    ParameterError,
    ShapeError,
    SizeError,
)

__all__ = [
    "__version__",
    "distributions",
    "transport1d",
    "maxsliced",
    "dkw",
    "dvoretzky",
    "harness",
    "AuditError",
    "ParameterError",
    "DomainError",
    "ShapeError",
    "SizeError",
    "NumericError",
    "BackendUnavailableError",
    "ConfigurationError",
    "InvariantError",
]
