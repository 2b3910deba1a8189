"""Exact one-dimensional Wasserstein-2 machinery on sorted samples.

The sorted pairing of two equal-size samples realizes the optimal coupling,
so W2 between their empirical measures is the root mean square gap of the
order statistics; against a reference law it expands through exact cell
integrals of the quantile function. A small factorial matcher serves as the
ground-truth oracle, and a sign-flip witness drives the lower-bound
experiments.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .distributions import MarginalQuantile, rng_for
from .errors import InvariantError, ParameterError, ShapeError, SizeError

BRUTE_FORCE_LIMIT = 10  # factorial enumeration cap


@dataclass(frozen=True)
class SortedSlice:
    """A nondecreasing projected sample with optional provenance."""

    values: np.ndarray
    origin: str = ""

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).ravel())
        if arr.size > 1 and np.any(np.diff(arr) < 0.0):
            raise InvariantError("slice values must be nondecreasing; use sorted_slice")
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class CellMeanProfile:
    """Per-cell averages of a reference quantile over the m level cells."""

    values: np.ndarray
    source: str = ""

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64).ravel())
        if arr.size == 0:
            raise ParameterError("profile must have at least one cell")
        if np.any(np.diff(arr) < -1e-9 * (1.0 + np.abs(arr).max())):
            raise InvariantError("cell means of a quantile must be nondecreasing")
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return self.values.size


def sorted_slice(values, origin: str = "") -> SortedSlice:
    """Sort a raw projected sample (stable, ties by original index)."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    return SortedSlice(values=np.sort(arr, kind="stable"), origin=origin)


def _coerce(x) -> SortedSlice:
    return x if isinstance(x, SortedSlice) else sorted_slice(x)


def w2_pair(x, y) -> float:
    """W2 between two equal-size empirical measures via the sorted pairing."""
    xs, ys = _coerce(x), _coerce(y)
    if xs.m != ys.m:
        raise ShapeError(f"size mismatch: {xs.m} vs {ys.m}")
    if xs.m == 0:
        raise ParameterError("need at least one point per sample")
    return float(math.sqrt(np.mean((xs.values - ys.values) ** 2)))


def w2_bruteforce(x, y) -> float:
    """Exact minimum matching cost over all permutations; oracle for w2_pair."""
    xa = np.asarray(x, dtype=np.float64).ravel()
    ya = np.asarray(y, dtype=np.float64).ravel()
    if xa.size != ya.size:
        raise ShapeError(f"size mismatch: {xa.size} vs {ya.size}")
    m = xa.size
    if m == 0:
        raise ParameterError("need at least one point per sample")
    if m > BRUTE_FORCE_LIMIT:
        raise SizeError(f"brute force is capped at m <= {BRUTE_FORCE_LIMIT}, got {m}")
    ys = ya.tolist()
    best = math.inf
    for perm in itertools.permutations(xa.tolist()):
        cost = sum((a - b) ** 2 for a, b in zip(perm, ys))
        if cost < best:
            best = cost
    return math.sqrt(best / m)


def w2_vs_quantile(x, Q: MarginalQuantile) -> float:
    """W2 between a sorted sample's empirical measure and a reference law.

    Expands the squared distance through the reference's exact cell
    integrals: sum_i (x_i^2 / m - 2 x_i I1_i + I2_i).
    """
    xs = _coerce(x)
    if xs.m == 0:
        raise ParameterError("need at least one point")
    first, second = Q.cell_integrals(xs.m)
    sq = float(
        np.sum(xs.values**2) / xs.m - 2.0 * float(xs.values @ first) + float(np.sum(second))
    )
    return math.sqrt(max(sq, 0.0))


def cell_mean_profile(Q: MarginalQuantile, m: int) -> CellMeanProfile:
    """Cell means of the reference quantile: m times each first cell integral."""
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ParameterError(f"cell count must be a positive integer, got {m!r}")
    first, _ = Q.cell_integrals(int(m))
    profile = CellMeanProfile(values=m * first, source=getattr(Q, "backend", ""))
    mean_gap = abs(float(profile.values.mean()) - Q.total_integrals()[0])
    if mean_gap > 1e-10 * (1.0 + abs(Q.total_integrals()[0])):
        raise InvariantError(f"profile mean drifted from the law's mean by {mean_gap:g}")
    return profile


def rearrangement_deviation(x, profile: CellMeanProfile) -> float:
    """Root mean square gap between order statistics and the cell means.

    Never exceeds w2_vs_quantile for the same reference: per cell, the
    quantile's mean is the best constant approximation.
    """
    xs = _coerce(x)
    lam = profile.values if isinstance(profile, CellMeanProfile) else np.asarray(profile)
    if xs.m != lam.size:
        raise ShapeError(f"size mismatch: sample {xs.m} vs profile {lam.size}")
    return float(math.sqrt(np.mean((xs.values - lam) ** 2)))


class WitnessResult(NamedTuple):
    w2: float
    flag: bool


def witness_from_signs(signs, delta: float) -> WitnessResult:
    """Exact W2 between a sign sample and the fair two-point law at +-1.

    With k minus-signs among m, the two quantile functions differ exactly on
    an interval of length |k/m - 1/2| where they are 2 apart, so
    W2^2 = 4 |k/m - 1/2|. The flag marks the conclusion event: the mismatch
    interval carries mass at least sqrt(delta)/4, equivalently
    W2^2 >= sqrt(delta).
    """
    if not 0.0 < delta < 0.25:
        raise ParameterError(f"delta must lie in (0, 1/4), got {delta!r}")
    arr = np.asarray(signs, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ParameterError("need at least one sign")
    if not np.all(np.abs(arr) == 1.0):
        raise ParameterError("signs must be +-1")
    mass = abs(float(np.sum(arr < 0)) / arr.size - 0.5)
    w2 = 2.0 * math.sqrt(mass)
    return WitnessResult(w2=w2, flag=bool(4.0 * mass >= math.sqrt(delta)))


def bernoulli_witness(m: int, delta: float, seed: int) -> WitnessResult:
    """Draw m fair signs and report (W2 to the source law, lower-bound flag)."""
    if not isinstance(m, (int, np.integer)) or m < 4:
        raise ParameterError(f"witness needs m >= 4, got {m!r}")
    if not 0.0 < delta < 0.25:
        raise ParameterError(f"delta must lie in (0, 1/4), got {delta!r}")
    signs = 2.0 * rng_for(seed).integers(0, 2, size=int(m)).astype(np.float64) - 1.0
    return witness_from_signs(signs, delta)
