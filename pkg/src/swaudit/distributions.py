"""Isotropic test laws: samplers plus exact marginal quantile machinery.

Every law is mean zero with identity covariance. Projections onto a unit
direction are served through one of three interchangeable backends:

``closed_form``
    Gaussian marginals (any direction), products of centred Laplace
    coordinates (signed exponential-mixture partial fractions), and
    spherically symmetric radial mixtures (incomplete-beta one-dimensional
    projection of the uniform direction).
``enumerated``
    Sign-vector laws with at most 20 active coordinates, and one-dimensional
    radial atoms; the marginal is a finite atomic measure handled exactly.
``monte_carlo_reference``
    Everything else: a large sorted reference sample whose empirical
    quantile, CDF, and cell integrals are used verbatim.

Each backend exposes the quantile function, the CDF, and exact integrals of
the quantile and its square over the level cells ((i-1)/m, i/m], which is
what the one-dimensional transport formulas consume.
"""

from __future__ import annotations

import math
import struct
from abc import ABC, abstractmethod
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import beta as beta_function
from scipy.special import betainc, ndtr, ndtri

from .errors import (
    BackendUnavailableError,
    DomainError,
    InvariantError,
    ParameterError,
    ShapeError,
)

KINDS = (
    "standard_gaussian",
    "rademacher_cube",
    "isotropic_laplace_product",
    "sphere_radial",
)

DEFAULT_MC_SIZE = 10**7
ENUMERATION_LIMIT = 20  # exact sign-vector enumeration up to 2^20 atoms

_LAPLACE_SCALE = 1.0 / math.sqrt(2.0)  # unit-variance coordinate scale
_MATRIX_MAGIC = b"SWAUDSMX"
_MC_STREAM_TAG = 0x4D435245  # keeps reference draws off the sampling streams
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def rng_for(master: int, *path: int) -> np.random.Generator:
    """Independent generator for a master seed and an integer derivation path.

    Streams for distinct (master, path) tuples never collide, which is what
    makes parallel trials reproducible from a single campaign seed.
    """
    entries = [int(master), *[int(p) for p in path]]
    if any(e < 0 for e in entries):
        raise ParameterError("seed path entries must be non-negative integers")
    return np.random.default_rng(np.random.SeedSequence(entries))


@dataclass(frozen=True)
class RadialLaw:
    """Radius distribution for spherically symmetric vectors.

    ``two_point`` fields (a, p, b) are absolute radii: radius b with
    probability p, radius a otherwise. ``heavy_tail`` describes a
    unit-second-moment scalar factor v (bulk atom plus a Pareto tail of the
    given exponent above the floor, carrying the given mass); the radius in
    dimension d is sqrt(d) * v.
    """

    kind: str
    a: float = 0.0
    p: float = 0.0
    b: float = 0.0
    exponent: float = 0.0
    floor: float = 0.0
    mass: float = 0.0

    @classmethod
    def two_point(cls, a: float, p: float, b: float) -> "RadialLaw":
        if not 0.0 <= p <= 1.0:
            raise ParameterError(f"two-point probability must lie in [0, 1], got {p}")
        if a <= 0 or b <= 0:
            raise ParameterError("two-point radii must be positive")
        return cls(kind="two_point", a=float(a), p=float(p), b=float(b))

    @classmethod
    def heavy_tail(
        cls, exponent: float = 11.0, floor: float = 100.0, mass: float = 1e-20
    ) -> "RadialLaw":
        if exponent <= 2:
            raise ParameterError("tail exponent must exceed 2 for a finite variance")
        if floor <= 0 or not 0.0 <= mass < 1.0:
            raise ParameterError("need floor > 0 and tail mass in [0, 1)")
        if mass * cls._tail_second(exponent, floor) >= 1.0:
            raise ParameterError("tail carries more than the whole second moment")
        return cls(
            kind="heavy_tail", exponent=float(exponent), floor=float(floor), mass=float(mass)
        )

    @staticmethod
    def _tail_second(exponent: float, floor: float) -> float:
        return exponent / (exponent - 2.0) * floor**2

    def bulk_value(self) -> float:
        """Atom of the heavy-tail scalar factor below the Pareto floor."""
        tail2 = self._tail_second(self.exponent, self.floor)
        return math.sqrt((1.0 - self.mass * tail2) / (1.0 - self.mass))

    def second_moment(self, d: int) -> float:
        if self.kind == "two_point":
            return (1.0 - self.p) * self.a**2 + self.p * self.b**2
        return float(d)  # heavy tail is calibrated to E v^2 = 1 exactly

    def radii(self, d: int, n: int, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "two_point":
            hit = rng.random(n) < self.p
            return np.where(hit, self.b, self.a)
        bulk = self.bulk_value()
        hit = rng.random(n) < self.mass
        v = np.full(n, bulk)
        if hit.any():
            # inverse of the Pareto survival function (floor / t) ** exponent
            v[hit] = self.floor * rng.random(int(hit.sum())) ** (-1.0 / self.exponent)
        return math.sqrt(d) * v


@dataclass(frozen=True)
class DistributionSpec:
    """A sampleable isotropic law on R^d.

    norm_equiv is optional (q, L) metadata recording a moment-equivalence
    constant for the law's marginals; it is carried, not enforced.
    """

    kind: str
    d: int
    radial: RadialLaw | None = None
    norm_equiv: tuple[float, float] | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ParameterError(f"unknown law kind {self.kind!r}; expected one of {KINDS}")
        if not isinstance(self.d, (int, np.integer)) or self.d < 1:
            raise ParameterError(f"dimension must be a positive integer, got {self.d!r}")
        if self.kind == "sphere_radial":
            if self.radial is None:
                raise ParameterError("sphere_radial requires a radial law")
        elif self.radial is not None:
            raise ParameterError(f"{self.kind} does not take a radial law")
        if self.norm_equiv is not None:
            q, L = self.norm_equiv
            if q < 2 or L < 1:
                raise ParameterError("norm equivalence metadata needs q >= 2 and L >= 1")

    @property
    def spec_id(self) -> str:
        if self.kind == "sphere_radial":
            return f"sphere_radial[{self.radial.kind}](d={self.d})"
        return f"{self.kind}(d={self.d})"


@dataclass(frozen=True)
class SampleMatrix:
    """m x d realization with seed provenance; rows are independent draws."""

    values: np.ndarray
    seed: int | None = None
    spec: DistributionSpec | None = None

    def __post_init__(self) -> None:
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 2:
            raise ShapeError(f"sample matrix must be 2-d, got shape {arr.shape}")
        object.__setattr__(self, "values", arr)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    @property
    def d(self) -> int:
        return self.values.shape[1]

    @property
    def spec_id(self) -> str:
        return self.spec.spec_id if self.spec is not None else "unknown"


def _draw(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    d = spec.d
    if n == 0:
        return np.zeros((0, d))
    if spec.kind == "standard_gaussian":
        return rng.standard_normal((n, d))
    if spec.kind == "rademacher_cube":
        return 2.0 * rng.integers(0, 2, size=(n, d)).astype(np.float64) - 1.0
    if spec.kind == "isotropic_laplace_product":
        return rng.laplace(0.0, _LAPLACE_SCALE, size=(n, d))
    # sphere_radial: uniform direction scaled by an independent radius
    g = rng.standard_normal((n, d))
    norms = np.linalg.norm(g, axis=1)
    bad = norms == 0.0
    if bad.any():  # measure zero; keep the draw well defined anyway
        g[bad, 0] = 1.0
        norms[bad] = 1.0
    r = spec.radial.radii(d, n, rng)
    return g * (r / norms)[:, None]


def sample(spec: DistributionSpec, m: int, seed: int) -> SampleMatrix:
    """Draw m independent rows from spec, bit-reproducible per seed."""
    if not isinstance(spec, DistributionSpec):
        raise ParameterError("spec must be a DistributionSpec")
    if not isinstance(m, (int, np.integer)) or m < 0:
        raise ParameterError(f"sample size must be a non-negative integer, got {m!r}")
    values = _draw(spec, int(m), rng_for(seed))
    return SampleMatrix(values=values, seed=int(seed), spec=spec)


def draw_rows(spec: DistributionSpec, n: int, rng: np.random.Generator) -> np.ndarray:
    """n raw sample rows using the caller's generator (no provenance wrapper)."""
    if not isinstance(spec, DistributionSpec):
        raise ParameterError("spec must be a DistributionSpec")
    if not isinstance(n, (int, np.integer)) or n < 0:
        raise ParameterError(f"sample size must be a non-negative integer, got {n!r}")
    return _draw(spec, int(n), rng)


def save_matrix(matrix: SampleMatrix, path) -> None:
    """Persist as little-endian float64 behind a 16-byte (magic, m, d) header."""
    header = struct.pack("<8sII", _MATRIX_MAGIC, matrix.m, matrix.d)
    Path(path).write_bytes(header + matrix.values.astype("<f8").tobytes(order="C"))


def load_matrix(path) -> SampleMatrix:
    raw = Path(path).read_bytes()
    if len(raw) < 16:
        raise ShapeError(f"{path}: truncated header")
    magic, m, d = struct.unpack("<8sII", raw[:16])
    if magic != _MATRIX_MAGIC:
        raise ShapeError(f"{path}: bad magic {magic!r}")
    body = np.frombuffer(raw[16:], dtype="<f8")
    if body.size != m * d:
        raise ShapeError(f"{path}: expected {m * d} entries, found {body.size}")
    return SampleMatrix(values=body.reshape(m, d).copy())


def calibrate_two_point(d: int, m: int) -> RadialLaw:
    """Two-radius law matched to isotropy in dimension d at sample size m.

    The rare radius is (m d)^(1/4) with probability 1/(2m); the common radius
    beta * sqrt(d) is solved from the exact second-moment equation
    (1 - 1/(2m)) beta^2 d + (1/2) sqrt(d/m) = d.
    """
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ParameterError(f"dimension must be a positive integer, got {d!r}")
    if not isinstance(m, (int, np.integer)) or m < 4 * d:
        raise ParameterError(f"two-point calibration needs m >= 4 d, got m={m}, d={d}")
    p = 1.0 / (2.0 * m)
    b = float((m * d) ** 0.25)
    beta = math.sqrt((d - 0.5 * math.sqrt(d / m)) / (d * (1.0 - p)))
    law = RadialLaw.two_point(a=beta * math.sqrt(d), p=p, b=b)
    second = law.second_moment(d)
    if abs(second - d) > 1e-12 * d:
        raise InvariantError(f"calibration drift: E r^2 = {second!r}, want {d}")
    return law


# ---------------------------------------------------------------------------
# marginal quantile backends
# ---------------------------------------------------------------------------


def _bisect_level(cdf, targets, lo, hi, tol, max_iter=120):
    # leftmost t with cdf(t) >= target, given cdf(lo) < target <= cdf(hi)
    lo = lo.copy()
    hi = hi.copy()
    for _ in range(max_iter):
        if float(np.max(hi - lo)) <= tol:
            break
        mid = 0.5 * (lo + hi)
        below = cdf(mid) < targets
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
    return hi


class MarginalQuantile(ABC):
    """Quantile function of a one-dimensional marginal with exact cell integrals."""

    backend: str = "abstract"

    @abstractmethod
    def _quantile(self, us: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _cdf(self, ts: np.ndarray) -> np.ndarray: ...

    @abstractmethod
    def _cumulative(self, us: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """(int_0^u quantile, int_0^u quantile^2) at interior levels u."""

    @abstractmethod
    def total_integrals(self) -> tuple[float, float]:
        """(mean, second moment) of the marginal."""

    def quantile(self, u):
        arr = np.asarray(u, dtype=np.float64)
        if arr.size and (not np.all(np.isfinite(arr)) or arr.min() <= 0.0 or arr.max() >= 1.0):
            raise DomainError("quantile levels must lie strictly inside (0, 1)")
        out = self._quantile(np.atleast_1d(arr))
        return float(out[0]) if arr.ndim == 0 else out

    def cdf(self, t):
        arr = np.asarray(t, dtype=np.float64)
        out = self._cdf(np.atleast_1d(arr))
        return float(out[0]) if arr.ndim == 0 else out

    def cell_integrals(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        """Exact integrals of the quantile and its square over the m level cells."""
        if not isinstance(m, (int, np.integer)) or m < 1:
            raise ParameterError(f"cell count must be a positive integer, got {m!r}")
        mean_total, second_total = self.total_integrals()
        if m == 1:
            return np.array([mean_total]), np.array([second_total])
        interior = np.arange(1, m, dtype=np.float64) / m
        c1, c2 = self._cumulative(interior)
        c1 = np.concatenate(([0.0], c1, [mean_total]))
        c2 = np.concatenate(([0.0], c2, [second_total]))
        return np.diff(c1), np.diff(c2)


def cell_integrals(Q: MarginalQuantile, i: int, m: int) -> tuple[float, float]:
    """Integrals of (quantile, quantile^2) over the 1-indexed cell ((i-1)/m, i/m]."""
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise ParameterError(f"cell count must be a positive integer, got {m!r}")
    if not isinstance(i, (int, np.integer)) or not 1 <= i <= m:
        raise ParameterError(f"cell index must satisfy 1 <= i <= m, got i={i!r}, m={m}")
    first, second = Q.cell_integrals(int(m))
    return float(first[i - 1]), float(second[i - 1])


class GaussianMarginal(MarginalQuantile):
    """Standard normal marginal; every direction of the gaussian law."""

    backend = "closed_form"

    def _quantile(self, us):
        return ndtri(us)

    def _cdf(self, ts):
        return ndtr(ts)

    def _cumulative(self, us):
        t = ndtri(us)
        phi = np.exp(-0.5 * t * t) / _SQRT_2PI
        return -phi, us - t * phi

    def total_integrals(self):
        return 0.0, 1.0


class DiscreteMarginal(MarginalQuantile):
    """Finite atomic marginal; quantiles and cell integrals are exact sums."""

    backend = "enumerated"

    def __init__(self, atoms, probs):
        atoms = np.asarray(atoms, dtype=np.float64).ravel()
        probs = np.asarray(probs, dtype=np.float64).ravel()
        if atoms.size == 0 or atoms.shape != probs.shape:
            raise ShapeError("need equally many atoms and probabilities, at least one")
        if probs.min() < 0.0:
            raise ParameterError("probabilities must be non-negative")
        if abs(probs.sum() - 1.0) > 1e-9:
            raise InvariantError(f"atom masses sum to {probs.sum()!r}, not 1")
        order = np.argsort(atoms, kind="stable")
        atoms, probs = atoms[order], probs[order]
        keep = probs > 0.0
        atoms, probs = atoms[keep], probs[keep]
        # merge exactly equal atoms so cumulative levels are strictly increasing
        new = np.empty(atoms.size, dtype=bool)
        new[0] = True
        new[1:] = atoms[1:] != atoms[:-1]
        idx = np.cumsum(new) - 1
        self.atoms = atoms[new]
        self.probs = np.bincount(idx, weights=probs)
        cum = np.cumsum(self.probs)
        cum[-1] = 1.0
        self._cum = cum
        self._prefix1 = np.concatenate(([0.0], np.cumsum(self.atoms * self.probs)))
        self._prefix2 = np.concatenate(([0.0], np.cumsum(self.atoms**2 * self.probs)))

    def _quantile(self, us):
        return self.atoms[np.searchsorted(self._cum, us, side="left")]

    def _cdf(self, ts):
        idx = np.searchsorted(self.atoms, ts, side="right")
        return np.concatenate(([0.0], self._cum))[idx]

    def _cumulative(self, us):
        knots = np.concatenate(([0.0], self._cum))
        return np.interp(us, knots, self._prefix1), np.interp(us, knots, self._prefix2)

    def total_integrals(self):
        return float(self._prefix1[-1]), float(self._prefix2[-1])


class MonteCarloMarginal(MarginalQuantile):
    """Empirical quantile of a large sorted reference sample."""

    backend = "monte_carlo_reference"

    def __init__(self, sorted_values, sample_size=None):
        y = np.ascontiguousarray(np.asarray(sorted_values, dtype=np.float64).ravel())
        if y.size == 0:
            raise ShapeError("reference sample must be non-empty")
        self.values = y
        self.sample_size = int(sample_size) if sample_size is not None else y.size
        self._s1 = None
        self._s2 = None

    def _prefixes(self):
        if self._s1 is None:
            self._s1 = np.concatenate(([0.0], np.cumsum(self.values)))
            self._s2 = np.concatenate(([0.0], np.cumsum(self.values**2)))
        return self._s1, self._s2

    def _quantile(self, us):
        n = self.values.size
        idx = np.clip(np.ceil(us * n).astype(np.int64) - 1, 0, n - 1)
        return self.values[idx]

    def _cdf(self, ts):
        return np.searchsorted(self.values, ts, side="right") / self.values.size

    def _cumulative(self, us):
        n = self.values.size
        s1, s2 = self._prefixes()
        pos = us * n
        k = np.minimum(np.floor(pos).astype(np.int64), n - 1)
        frac = pos - k
        c1 = (s1[k] + frac * self.values[k]) / n
        c2 = (s2[k] + frac * self.values[k] ** 2) / n
        return c1, c2

    def total_integrals(self):
        s1, s2 = self._prefixes()
        n = self.values.size
        return float(s1[-1] / n), float(s2[-1] / n)


class LaplaceMixtureMarginal(MarginalQuantile):
    """Signed mixture of centred Laplace CDFs: the marginal of a Laplace product.

    A projection sum_j theta_j X_j with distinct component scales b_j has CDF
    sum_j A_j F_{b_j}(t) with partial-fraction weights A_j; the weights can be
    huge and alternating when scales nearly coincide, so construction goes
    through gates in the factory and falls back to Monte Carlo.
    """

    backend = "closed_form"

    def __init__(self, scales, weights):
        self.scales = np.asarray(scales, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.scales.shape != self.weights.shape or self.scales.ndim != 1:
            raise ShapeError("scales and weights must be matching 1-d arrays")
        if self.scales.min() <= 0:
            raise ParameterError("component scales must be positive")
        self._span = float(self.scales.max())

    def _components(self, ts, kind):
        t = ts[:, None]
        b = self.scales[None, :]
        neg = t < 0.0
        with np.errstate(over="ignore"):  # exp underflow only; overflow impossible
            decay = np.exp(-np.abs(t) / b)
        if kind == "cdf":
            comp = np.where(neg, 0.5 * decay, 1.0 - 0.5 * decay)
        elif kind == "first":
            comp = np.where(neg, 0.5 * decay * (t - b), -0.5 * decay * (t + b))
        else:  # integral of x^2 up to t
            comp = np.where(
                neg,
                0.5 * decay * (t * t - 2 * b * t + 2 * b * b),
                2 * b * b - 0.5 * decay * (t * t + 2 * b * t + 2 * b * b),
            )
        return comp @ self.weights

    def _cdf(self, ts):
        return self._components(ts, "cdf")

    def _cdf_pdf(self, ts):
        t = ts[:, None]
        b = self.scales[None, :]
        with np.errstate(over="ignore"):
            decay = np.exp(-np.abs(t) / b)
        cdf = np.where(t < 0.0, 0.5 * decay, 1.0 - 0.5 * decay) @ self.weights
        pdf = (0.5 * decay / b) @ self.weights
        return cdf, pdf

    def _newton_refine(self, us, lo, hi, t):
        # bracket-safeguarded Newton; each sweep shares one exp evaluation
        # between CDF and density
        tol = 1e-12 * self._span
        resid_floor = 8.0 * np.finfo(np.float64).eps * max(
            1.0, float(np.abs(self.weights).sum())
        )
        settled = np.zeros(us.shape, dtype=bool)
        for _ in range(48):
            cdf, pdf = self._cdf_pdf(t)
            settled |= np.abs(cdf - us) <= resid_floor
            settled |= hi - lo <= tol
            if settled.all():
                break
            below = cdf < us
            active = ~settled
            lo = np.where(active & below, t, lo)
            hi = np.where(active & ~below, t, hi)
            with np.errstate(divide="ignore", invalid="ignore"):
                cand = t - (cdf - us) / pdf
            inside = np.isfinite(cand) & (cand > lo) & (cand < hi)
            t = np.where(active, np.where(inside, cand, 0.5 * (lo + hi)), t)
        return t

    def _bracketed_quantile(self, us):
        lo = np.full(us.shape, -self._span)
        hi = np.full(us.shape, self._span)
        for _ in range(80):
            mask = self._cdf(lo) >= us
            if not mask.any():
                break
            lo[mask] *= 2.0
        for _ in range(80):
            mask = self._cdf(hi) < us
            if not mask.any():
                break
            hi[mask] *= 2.0
        for _ in range(8):
            mid = 0.5 * (lo + hi)
            below = self._cdf(mid) < us
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return self._newton_refine(us, lo, hi, 0.5 * (lo + hi))

    def _quantile(self, us):
        # large sorted batches (the cell-integral grid): solve every 8th level
        # from scratch, then the rest by Newton inside the anchor brackets
        if us.size >= 256 and bool(np.all(np.diff(us) > 0.0)):
            idx = np.arange(0, us.size, 8)
            if idx[-1] != us.size - 1:
                idx = np.append(idx, us.size - 1)
            anchors = np.maximum.accumulate(self._bracketed_quantile(us[idx]))
            pos = np.clip(
                np.searchsorted(us[idx], us, side="right") - 1, 0, idx.size - 2
            )
            lo = anchors[pos]
            hi = anchors[pos + 1]
            t0 = np.clip(np.interp(us, us[idx], anchors), lo, hi)
            return self._newton_refine(us, lo, hi, t0)
        return self._bracketed_quantile(us)

    def _cumulative(self, us):
        t = self._quantile(us)
        return self._components(t, "first"), self._components(t, "second")

    def total_integrals(self):
        return 0.0, float(2.0 * self.weights @ self.scales**2)


class SphereRadialMarginal(MarginalQuantile):
    """Projection of a spherically symmetric radial mixture, d >= 2.

    A uniform direction U on the sphere has <theta, U> distributed as
    2 B - 1 with B ~ Beta((d-1)/2, (d-1)/2); the marginal of radius r at
    level t is that law rescaled by r, and the mixture CDF is inverted by
    bisection.
    """

    backend = "closed_form"

    def __init__(self, radii, weights, d):
        if d < 2:
            raise ParameterError("spherical projection backend needs d >= 2")
        self.radii = np.asarray(radii, dtype=np.float64)
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.radii.shape != self.weights.shape or self.radii.ndim != 1:
            raise ShapeError("radii and weights must be matching 1-d arrays")
        if self.radii.min() <= 0 or self.weights.min() < 0:
            raise ParameterError("radii must be positive, weights non-negative")
        if abs(self.weights.sum() - 1.0) > 1e-12:
            raise InvariantError("radial mixture weights must sum to 1")
        self.d = int(d)
        self._half = (self.d - 1) / 2.0
        self._density_norm = 1.0 / beta_function(0.5, self._half)
        self._span = float(self.radii.max())

    def _fw(self, w):
        return betainc(self._half, self._half, np.clip((1.0 + w) / 2.0, 0.0, 1.0))

    def _gw(self, w):
        w = np.clip(w, -1.0, 1.0)
        return -self._density_norm * (1.0 - w * w) ** self._half / (self.d - 1)

    def _hw(self, w):
        w = np.clip(w, -1.0, 1.0)
        core = -w * (1.0 - w * w) ** self._half * self._density_norm / self.d
        return core + self._fw(w) / self.d

    def _mix(self, ts, func, scale_power):
        t = ts[:, None]
        r = self.radii[None, :]
        vals = func(np.clip(t / r, -1.0, 1.0))
        return vals @ (self.weights * self.radii**scale_power)

    def _cdf(self, ts):
        return self._mix(ts, self._fw, 0)

    def _quantile(self, us):
        lo = np.full(us.shape, -self._span)
        hi = np.full(us.shape, self._span)
        return _bisect_level(self._cdf, us, lo, hi, tol=1e-14 * self._span)

    def _cumulative(self, us):
        t = self._quantile(us)
        return self._mix(t, self._gw, 1), self._mix(t, self._hw, 2)

    def total_integrals(self):
        return 0.0, float(self.weights @ self.radii**2 / self.d)


# ---------------------------------------------------------------------------
# backend selection
# ---------------------------------------------------------------------------


def _enumerate_signs(theta_nz: np.ndarray) -> DiscreteMarginal:
    dn = theta_nz.size
    k = np.arange(1 << dn, dtype=np.int64)
    acc = np.zeros(k.size)
    for j in range(dn):
        acc += np.where((k >> j) & 1 == 1, theta_nz[j], -theta_nz[j])
    atoms, counts = np.unique(acc, return_counts=True)
    return DiscreteMarginal(atoms, counts / k.size)


def _partial_fraction_weights(scales: np.ndarray) -> np.ndarray:
    b2 = scales**2
    weights = np.empty(scales.size)
    for j in range(scales.size):
        others = np.delete(b2, j)
        weights[j] = np.prod(b2[j] / (b2[j] - others))
    return weights


def _laplace_backend(theta_nz: np.ndarray):
    scales = np.sort(np.abs(theta_nz))[::-1] * _LAPLACE_SCALE
    if scales.size == 1:
        return LaplaceMixtureMarginal(scales, np.ones(1))
    b2 = scales**2
    if np.min((b2[:-1] - b2[1:]) / b2[:-1]) < 1e-6:
        return None  # near-coincident scales: partial fractions blow up
    weights = _partial_fraction_weights(scales)
    if np.max(np.abs(weights)) > 1e10:
        return None
    if abs(weights.sum() - 1.0) > 1e-8:
        return None
    if abs(2.0 * weights @ b2 - 1.0) > 1e-6:
        return None
    return LaplaceMixtureMarginal(scales, weights)


def _monte_carlo_backend(spec, theta, mc_size, mc_seed, why):
    if mc_size is None or mc_size <= 0:
        raise BackendUnavailableError(f"{why}, and the Monte Carlo budget is disabled")
    rng = rng_for(mc_seed, _MC_STREAM_TAG)
    chunk = 1 << 20
    parts = []
    left = int(mc_size)
    while left > 0:
        n = min(chunk, left)
        parts.append(_draw(spec, n, rng) @ theta)
        left -= n
    return MonteCarloMarginal(np.sort(np.concatenate(parts)), sample_size=int(mc_size))


def marginal(
    spec: DistributionSpec,
    theta,
    mc_size: int = DEFAULT_MC_SIZE,
    mc_seed: int = 0,
) -> MarginalQuantile:
    """Quantile backend for the projection of spec onto the unit direction theta."""
    theta = np.asarray(theta, dtype=np.float64).ravel()
    if theta.size != spec.d:
        raise ShapeError(f"direction has {theta.size} entries, law lives in d={spec.d}")
    if abs(np.linalg.norm(theta) - 1.0) > 1e-12:
        raise ParameterError("direction must be a unit vector (tolerance 1e-12)")

    if spec.kind == "standard_gaussian":
        return GaussianMarginal()

    if spec.kind == "rademacher_cube":
        nz = theta[theta != 0.0]
        if nz.size <= ENUMERATION_LIMIT:
            return _enumerate_signs(nz)
        return _monte_carlo_backend(
            spec, theta, mc_size, mc_seed,
            f"cube enumeration is capped at {ENUMERATION_LIMIT} active coordinates",
        )

    if spec.kind == "isotropic_laplace_product":
        backend = _laplace_backend(theta[theta != 0.0])
        if backend is not None:
            return backend
        return _monte_carlo_backend(
            spec, theta, mc_size, mc_seed, "Laplace partial fractions are ill-conditioned"
        )

    law = spec.radial
    if law.kind == "two_point":
        radii = np.array([law.a, law.b])
        weights = np.array([1.0 - law.p, law.p])
        if spec.d == 1:
            atoms = np.concatenate((-radii, radii))
            return DiscreteMarginal(atoms, np.concatenate((weights, weights)) / 2.0)
        return SphereRadialMarginal(radii, weights, spec.d)
    return _monte_carlo_backend(
        spec, theta, mc_size, mc_seed, "heavy-tail radial law has no closed-form marginal"
    )


def marginal_quantile(spec: DistributionSpec, theta, u: float) -> float:
    """F^{-1} of the projected law at level u in (0, 1)."""
    uf = float(u)
    if not 0.0 < uf < 1.0:
        raise DomainError(f"quantile level must lie in (0, 1), got {u!r}")
    return float(marginal(spec, theta).quantile(uf))
