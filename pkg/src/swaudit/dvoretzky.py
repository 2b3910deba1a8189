"""Norm geometry, critical dimensions, and two-stage random embeddings.

An ell_p norm together with its dual radius fixes a critical dimension
d* = (E||G|| / R)^2, where G is a standard gaussian vector and R is the
euclidean radius of the dual unit ball.  A two-stage ensemble first
projects d-dimensional directions through a normalized sample matrix
Gamma = X/sqrt(m) and then mixes the m coefficients with independent
vectors Z_i (the columns of D).  The embedding profile

    Psi(u) = ||D Gamma u||

should be nearly constant over the unit sphere once m is large relative to
d and d is small relative to d*.  This module measures that oscillation,
splits the image vector into head / heavy / bulk parts for diagnostics,
and estimates how flat the conditional mean of Psi is across directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionSpec, SampleMatrix, draw_rows, rng_for
from .errors import (
    ConfigurationError,
    InvariantError,
    NumericError,
    ParameterError,
    ShapeError,
)
from .maxsliced import Direction, angular_grid, two_direction_distance, uniform_directions

__all__ = [
    "NormSpec",
    "CriticalDimension",
    "EnsembleConfig",
    "EnsembleReport",
    "DecompositionDiagnostics",
    "FlatnessReport",
    "ConditionalMeanResult",
    "critical_dimension",
    "build_two_stage",
    "build_ensemble",
    "direction_set",
    "embedding_oscillation",
    "decomposition_diagnostics",
    "expectation_flatness",
    "conditional_mean_ratio",
]

# Laws whose coordinates are independent (required for the mixing stage).
_IID_COORDINATE_KINDS = frozenset(
    {"standard_gaussian", "rademacher_cube", "isotropic_laplace_product"}
)

# Stream tags keeping the random inputs of each operation disjoint.
_X_STREAM = 1
_Z_STREAM = 2
_FLATNESS_STREAM = 3
_CONDITIONAL_STREAM = 4
_MC_STREAM = 5


# ---------------------------------------------------------------------------
# norms
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class NormSpec:
    """An ell_p norm on R^n with its dual-ball euclidean radius.

    The dual exponent q satisfies 1/p + 1/q = 1; the euclidean radius of
    the dual unit ball is max(1, n^(1/2 - 1/q)) = max(1, n^(1/p - 1/2)),
    attained at a basis vector for q <= 2 and at the flat vector otherwise.
    """

    p: float
    n: int

    def __post_init__(self) -> None:
        pf = float(self.p)
        if not (pf >= 1.0):
            raise ParameterError(f"norm exponent must satisfy p >= 1, got {self.p!r}")
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            raise ParameterError(f"ambient dimension must be a positive integer, got {self.n!r}")
        object.__setattr__(self, "p", pf)
        object.__setattr__(self, "n", int(self.n))

    def eval(self, x) -> float:
        """The p-norm of one vector."""
        arr = np.asarray(x, dtype=np.float64).ravel()
        if arr.size != self.n:
            raise ShapeError(f"expected a vector of length {self.n}, got {arr.size}")
        if self.p == 1.0:
            return float(np.sum(np.abs(arr)))
        if self.p == 2.0:
            return float(np.linalg.norm(arr))
        if math.isinf(self.p):
            return float(np.max(np.abs(arr)))
        return float(np.linalg.norm(arr, ord=self.p))

    def eval_columns(self, matrix: np.ndarray) -> np.ndarray:
        """The p-norm of every column of an n x k matrix."""
        arr = np.asarray(matrix, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != self.n:
            raise ShapeError(f"expected an {self.n} x k matrix, got shape {arr.shape}")
        if self.p == 1.0:
            return np.abs(arr).sum(axis=0)
        if self.p == 2.0:
            return np.linalg.norm(arr, axis=0)
        if math.isinf(self.p):
            return np.abs(arr).max(axis=0)
        return (np.abs(arr) ** self.p).sum(axis=0) ** (1.0 / self.p)

    @property
    def dual_radius(self) -> float:
        """sup of the euclidean norm over the dual unit ball."""
        if math.isinf(self.p):
            exponent = -0.5
        else:
            exponent = 1.0 / self.p - 0.5
        return max(1.0, float(self.n) ** exponent)

    def analytic_gaussian_mean(self) -> float | None:
        """Closed form for E||G|| when one exists (p in {1, 2})."""
        if self.p == 1.0:
            return self.n * math.sqrt(2.0 / math.pi)
        if self.p == 2.0:
            return math.sqrt(2.0) * math.exp(
                math.lgamma((self.n + 1) / 2.0) - math.lgamma(self.n / 2.0)
            )
        return None

    @property
    def label(self) -> str:
        if math.isinf(self.p):
            return f"linf(n={self.n})"
        if self.p == int(self.p):
            return f"l{int(self.p)}(n={self.n})"
        return f"l{self.p}(n={self.n})"


# ---------------------------------------------------------------------------
# critical dimension
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CriticalDimension:
    """d* = (E||G||/R)^2 with a delta-method standard error."""

    d_star: float
    stderr: float
    gaussian_mean: float
    gaussian_mean_stderr: float
    method: str

    def __post_init__(self) -> None:
        if self.d_star < 0 or self.stderr < 0:
            raise InvariantError("critical dimension and its error must be non-negative")
        if self.method not in ("analytic", "monte_carlo"):
            raise InvariantError(f"unknown estimation method {self.method!r}")


def critical_dimension(
    norm: NormSpec, mc_samples: int, seed: int, *, force_mc: bool = False
) -> CriticalDimension:
    """Estimate d* for the norm, analytically when a closed form exists.

    Monte Carlo runs average ||G|| over mc_samples standard gaussian draws
    and propagate the standard error through d* = (mean/R)^2.
    """
    if not isinstance(norm, NormSpec):
        raise ParameterError("norm must be a NormSpec")
    analytic = norm.analytic_gaussian_mean()
    radius = norm.dual_radius
    if analytic is not None and not force_mc:
        d_star = (analytic / radius) ** 2
        return CriticalDimension(
            d_star=d_star,
            stderr=0.0,
            gaussian_mean=analytic,
            gaussian_mean_stderr=0.0,
            method="analytic",
        )
    if not isinstance(mc_samples, (int, np.integer)) or mc_samples < 1000:
        raise ParameterError(
            f"monte carlo estimation needs at least 1000 samples, got {mc_samples!r}"
        )
    rng = rng_for(seed, _MC_STREAM)
    values = np.empty(int(mc_samples))
    filled = 0
    chunk = max(1, 2_000_000 // norm.n)
    while filled < values.size:
        k = min(chunk, values.size - filled)
        draws = rng.standard_normal((k, norm.n))
        values[filled : filled + k] = norm.eval_columns(draws.T)
        filled += k
    mean = float(values.mean())
    mean_se = float(values.std(ddof=1) / math.sqrt(values.size))
    return CriticalDimension(
        d_star=(mean / radius) ** 2,
        stderr=2.0 * mean * mean_se / radius**2,
        gaussian_mean=mean,
        gaussian_mean_stderr=mean_se,
        method="monte_carlo",
    )


# ---------------------------------------------------------------------------
# ensembles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleConfig:
    """Recipe for a random embedding of R^d into R^n.

    ``gaussian_direct`` embeds with a single n x d gaussian matrix.
    ``two_stage`` first forms Gamma = X/sqrt(m) from m sample rows in R^d,
    then mixes the m projection coefficients with independent vectors Z_i;
    the mixing law must have independent coordinates.
    """

    kind: str
    n: int
    d: int
    m: int = 0
    x_spec: DistributionSpec | None = None
    z_spec: DistributionSpec | None = None
    n_dirs: int = 64
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in ("gaussian_direct", "two_stage"):
            raise ParameterError(f"unknown ensemble kind {self.kind!r}")
        for name, value in (("n", self.n), ("d", self.d), ("n_dirs", self.n_dirs)):
            if not isinstance(value, (int, np.integer)) or value < 1:
                raise ParameterError(f"{name} must be a positive integer, got {value!r}")
        if self.kind == "two_stage":
            if self.x_spec is None or self.z_spec is None:
                raise ParameterError("two_stage ensembles need both an X spec and a Z spec")
            if not isinstance(self.m, (int, np.integer)) or self.m < self.d:
                raise ParameterError(
                    f"two_stage needs m >= d >= 1, got m={self.m!r}, d={self.d!r}"
                )
            if self.x_spec.d != self.d:
                raise ParameterError(
                    f"X spec lives in dimension {self.x_spec.d}, config says d={self.d}"
                )
            if self.z_spec.d != self.n:
                raise ParameterError(
                    f"Z spec lives in dimension {self.z_spec.d}, config says n={self.n}"
                )
            if self.z_spec.kind not in _IID_COORDINATE_KINDS:
                raise ConfigurationError(
                    f"mixing law {self.z_spec.kind!r} does not have independent "
                    "coordinates; use a product law"
                )


def build_two_stage(
    cfg: EnsembleConfig, *, x_rows: np.ndarray | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Materialize (Gamma, D) for a two-stage config.

    Gamma is the m x d matrix of sample rows divided by sqrt(m); D is the
    n x m matrix whose columns are independent draws of the mixing law.
    ``x_rows`` injects a fixed sample matrix in place of the X draw.
    """
    if not isinstance(cfg, EnsembleConfig) or cfg.kind != "two_stage":
        raise ParameterError("build_two_stage needs a two_stage EnsembleConfig")
    if x_rows is None:
        x = draw_rows(cfg.x_spec, cfg.m, rng_for(cfg.seed, _X_STREAM))
    else:
        x = np.asarray(x_rows, dtype=np.float64)
        if x.shape != (cfg.m, cfg.d):
            raise ShapeError(f"injected rows must have shape {(cfg.m, cfg.d)}, got {x.shape}")
    gamma = x / math.sqrt(cfg.m)
    z = draw_rows(cfg.z_spec, cfg.m, rng_for(cfg.seed, _Z_STREAM))
    return gamma, np.ascontiguousarray(z.T)


def build_ensemble(cfg: EnsembleConfig) -> tuple[np.ndarray, np.ndarray]:
    """Materialize (Gamma, D) for either ensemble kind."""
    if not isinstance(cfg, EnsembleConfig):
        raise ParameterError("cfg must be an EnsembleConfig")
    if cfg.kind == "two_stage":
        return build_two_stage(cfg)
    dmat = rng_for(cfg.seed, _Z_STREAM).standard_normal((cfg.n, cfg.d))
    return np.eye(cfg.d), dmat


def direction_set(d: int, count: int, seed: int) -> tuple[Direction, ...]:
    """Probe directions: a deterministic angular grid in the plane, uniform
    random unit vectors in higher dimension."""
    if not isinstance(d, (int, np.integer)) or d < 1:
        raise ParameterError(f"dimension must be a positive integer, got {d!r}")
    if d == 2:
        return angular_grid(count)
    return uniform_directions(count, d, seed)


# ---------------------------------------------------------------------------
# oscillation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class EnsembleReport:
    """Profile of Psi over a direction set.

    ``level`` is the empirical median of the Psi values (the mean is also
    carried); ``oscillation`` is the largest relative departure from it.
    """

    level: float
    mean_level: float
    oscillation: float
    psi_values: tuple[float, ...]
    d_star_used: float
    n: int
    d: int
    m: int

    def __post_init__(self) -> None:
        psi = np.array(self.psi_values)
        if psi.size == 0:
            raise InvariantError("report needs at least one direction")
        expected = float(np.max(np.abs(psi / self.level - 1.0)))
        if self.oscillation != expected:
            raise InvariantError("oscillation must equal max |psi/level - 1| exactly")


def embedding_oscillation(
    gamma: np.ndarray,
    dmat: np.ndarray,
    norm: NormSpec,
    dirs: tuple[Direction, ...],
    *,
    d_star_used: float = float("nan"),
) -> EnsembleReport:
    """Evaluate Psi(u) = ||D Gamma u|| over the direction set.

    The reported level is the median of the values; oscillation is
    sup |Psi/level - 1|, the relative width of the profile.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    dmat = np.asarray(dmat, dtype=np.float64)
    if gamma.ndim != 2 or dmat.ndim != 2:
        raise ShapeError("gamma and the mixing matrix must be 2-d")
    m, d = gamma.shape
    if dmat.shape[1] != m:
        raise ShapeError(
            f"mixing matrix has {dmat.shape[1]} columns but gamma has {m} rows"
        )
    if not isinstance(norm, NormSpec):
        raise ParameterError("norm must be a NormSpec")
    if dmat.shape[0] != norm.n:
        raise ParameterError(
            f"norm lives on R^{norm.n} but the image vectors have length {dmat.shape[0]}"
        )
    if len(dirs) == 0:
        raise ParameterError("need at least one probe direction")
    for u in dirs:
        if not isinstance(u, Direction) or u.d != d:
            raise ParameterError(f"probe directions must be unit vectors in R^{d}")
    basis = np.stack([u.coords for u in dirs], axis=1)  # d x k
    images = dmat @ (gamma @ basis)  # n x k
    psi = norm.eval_columns(images)
    level = float(np.median(psi))
    if not level > 0.0:
        raise NumericError("embedding level collapsed to zero; the profile is degenerate")
    return EnsembleReport(
        level=level,
        mean_level=float(psi.mean()),
        oscillation=float(np.max(np.abs(psi / level - 1.0))),
        psi_values=tuple(float(v) for v in psi),
        d_star_used=float(d_star_used),
        n=int(norm.n),
        d=int(d),
        m=int(m),
    )


# ---------------------------------------------------------------------------
# decomposition diagnostics
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecompositionDiagnostics:
    """Head / heavy / bulk split of the image vector D Gamma u.

    The head keeps the s indices with the largest |coefficient|; among the
    rest, terms whose norm reaches residual_scale * threshold form the
    heavy part and everything else the bulk.  The three parts sum to the
    full image vector by construction.
    """

    s: int
    r: int
    residual_scale: float
    threshold: float
    head_size: int
    heavy_size: int
    bulk_size: int
    head_indices: tuple[int, ...]
    head_norm: float
    heavy_norm: float
    bulk_norm: float
    full_norm: float
    recon_gap: float
    head_vector: tuple[float, ...] = field(repr=False)
    heavy_vector: tuple[float, ...] = field(repr=False)
    bulk_vector: tuple[float, ...] = field(repr=False)

    def __post_init__(self) -> None:
        if self.head_size != self.s:
            raise InvariantError("the head must contain exactly s indices")
        if len(self.head_indices) != self.s:
            raise InvariantError("head index list disagrees with its size")


def decomposition_diagnostics(
    u: Direction,
    gamma: np.ndarray,
    z_sample: np.ndarray,
    s: int,
    r: int,
    norm: NormSpec,
    *,
    scale_constant: float = 1.0,
    gaussian_mean: float | None = None,
) -> DecompositionDiagnostics:
    """Split D Gamma u into head, heavy, and bulk parts and report norms.

    residual_scale is the largest |coefficient| outside the head; the
    truncation threshold is scale_constant * (E||G|| + R * sqrt(log(e m / r)))
    with the dual radius R.  Ties in the coefficient ranking break toward
    the smaller row index.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    z_sample = np.asarray(z_sample, dtype=np.float64)
    if gamma.ndim != 2 or z_sample.ndim != 2:
        raise ShapeError("gamma and the mixing sample must be 2-d")
    m, d = gamma.shape
    if z_sample.shape[1] != m:
        raise ShapeError(f"mixing sample has {z_sample.shape[1]} columns, expected {m}")
    if not isinstance(norm, NormSpec) or z_sample.shape[0] != norm.n:
        raise ParameterError(f"norm must be a NormSpec on R^{z_sample.shape[0]}")
    if not isinstance(u, Direction) or u.d != d:
        raise ParameterError(f"u must be a unit direction in R^{d}")
    if not isinstance(s, (int, np.integer)) or not 1 <= s < m:
        raise ParameterError(f"head size must satisfy 1 <= s < m, got s={s!r}, m={m}")
    if not isinstance(r, (int, np.integer)) or not 1 <= r <= m:
        raise ParameterError(f"rank parameter must satisfy 1 <= r <= m, got r={r!r}, m={m}")
    if not scale_constant > 0.0:
        raise ParameterError(f"scale constant must be positive, got {scale_constant!r}")
    if gaussian_mean is None:
        gaussian_mean = norm.analytic_gaussian_mean()
        if gaussian_mean is None:
            raise ParameterError(
                "no closed-form gaussian mean for this norm; pass gaussian_mean explicitly"
            )
    if not gaussian_mean > 0.0:
        raise ParameterError(f"gaussian mean must be positive, got {gaussian_mean!r}")

    coeff = gamma @ u.coords
    order = np.lexsort((np.arange(m), -np.abs(coeff)))
    head_idx = order[: int(s)]
    rest_idx = order[int(s) :]
    residual_scale = float(np.abs(coeff[rest_idx]).max())
    threshold = float(
        scale_constant
        * (gaussian_mean + norm.dual_radius * math.sqrt(1.0 + math.log(m / float(r))))
    )

    znorms = norm.eval_columns(z_sample)
    term_sizes = np.abs(coeff) * znorms
    cutoff = residual_scale * threshold
    heavy_mask = term_sizes[rest_idx] >= cutoff
    heavy_idx = rest_idx[heavy_mask]
    bulk_idx = rest_idx[~heavy_mask]

    full = z_sample @ coeff
    head_vec = z_sample[:, head_idx] @ coeff[head_idx]
    heavy_vec = z_sample[:, heavy_idx] @ coeff[heavy_idx]
    bulk_vec = z_sample[:, bulk_idx] @ coeff[bulk_idx]

    full_norm2 = float(np.linalg.norm(full))
    gap = float(np.linalg.norm(head_vec + heavy_vec + bulk_vec - full))
    if gap > 1e-10 * max(full_norm2, 1e-300):
        raise InvariantError("head + heavy + bulk failed to reconstruct the image vector")
    if np.any(term_sizes[bulk_idx] >= cutoff):
        raise InvariantError("a bulk term reached the truncation level")

    return DecompositionDiagnostics(
        s=int(s),
        r=int(r),
        residual_scale=residual_scale,
        threshold=threshold,
        head_size=int(head_idx.size),
        heavy_size=int(heavy_idx.size),
        bulk_size=int(bulk_idx.size),
        head_indices=tuple(int(i) for i in np.sort(head_idx)),
        head_norm=float(norm.eval(head_vec)),
        heavy_norm=float(norm.eval(heavy_vec)),
        bulk_norm=float(norm.eval(bulk_vec)),
        full_norm=float(norm.eval(full)),
        recon_gap=gap,
        head_vector=tuple(float(v) for v in head_vec),
        heavy_vector=tuple(float(v) for v in heavy_vec),
        bulk_vector=tuple(float(v) for v in bulk_vec),
    )


# ---------------------------------------------------------------------------
# conditional-mean flatness
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class FlatnessReport:
    """Monte Carlo profile of the conditional mean of Psi across directions.

    ``bound_ratio`` compares the largest pairwise difference of the
    estimates against gaussian_mean * two_direction_distance for the same
    pair; the comparison constant is unknown, so the ratio is reported and
    never asserted.
    """

    estimates: tuple[float, ...]
    stderrs: tuple[float, ...]
    level: float
    max_pairwise_diff: float
    bound_ratio: float
    pairs_used: int
    z_trials: int


def expectation_flatness(
    gamma: np.ndarray,
    z_spec: DistributionSpec,
    norm: NormSpec,
    dirs: tuple[Direction, ...],
    z_trials: int,
    seed: int,
    *,
    gaussian_mean: float | None = None,
) -> FlatnessReport:
    """Estimate E_Z Psi(u) per direction and compare pairwise differences.

    Each trial draws one fresh mixing matrix shared by every direction, so
    pairwise comparisons cancel the common randomness.  Pairs closer than
    1e-12 in two-direction distance are skipped in the ratio.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim != 2:
        raise ShapeError("gamma must be 2-d")
    m, d = gamma.shape
    if not isinstance(z_spec, DistributionSpec) or z_spec.kind not in _IID_COORDINATE_KINDS:
        raise ParameterError("mixing law must be a product law with independent coordinates")
    if not isinstance(norm, NormSpec) or norm.n != z_spec.d:
        raise ParameterError(f"norm must be a NormSpec on R^{z_spec.d}")
    if not isinstance(z_trials, (int, np.integer)) or z_trials < 30:
        raise ParameterError(f"need at least 30 mixing draws, got {z_trials!r}")
    if len(dirs) == 0:
        raise ParameterError("need at least one probe direction")
    for u in dirs:
        if not isinstance(u, Direction) or u.d != d:
            raise ParameterError(f"probe directions must be unit vectors in R^{d}")
    if gaussian_mean is None:
        gaussian_mean = norm.analytic_gaussian_mean()
        if gaussian_mean is None:
            raise ParameterError(
                "no closed-form gaussian mean for this norm; pass gaussian_mean explicitly"
            )

    basis = np.stack([u.coords for u in dirs], axis=1)  # d x k
    coeff = gamma @ basis  # m x k
    rng = rng_for(seed, _FLATNESS_STREAM)
    k = len(dirs)
    values = np.empty((int(z_trials), k))
    for t in range(int(z_trials)):
        dmat = draw_rows(z_spec, m, rng).T
        values[t] = norm.eval_columns(dmat @ coeff)
    estimates = values.mean(axis=0)
    stderrs = values.std(axis=0, ddof=1) / math.sqrt(z_trials)

    level = float(np.median(estimates))
    if not level > 0.0:
        raise NumericError("conditional-mean level collapsed to zero")
    x_sample = SampleMatrix(values=math.sqrt(m) * gamma)
    best_ratio = 0.0
    pairs_used = 0
    for a in range(k):
        for b in range(a + 1, k):
            dist = two_direction_distance(x_sample, dirs[a], dirs[b])
            if dist <= 1e-12:
                continue
            pairs_used += 1
            ratio = abs(estimates[a] - estimates[b]) / (gaussian_mean * dist)
            best_ratio = max(best_ratio, ratio)
    return FlatnessReport(
        estimates=tuple(float(v) for v in estimates),
        stderrs=tuple(float(v) for v in stderrs),
        level=level,
        max_pairwise_diff=float(estimates.max() - estimates.min()),
        bound_ratio=best_ratio,
        pairs_used=pairs_used,
        z_trials=int(z_trials),
    )


# ---------------------------------------------------------------------------
# conditional mean lower ratio
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionalMeanResult:
    """Monitored ratio E_Z Psi(v) / E||G|| behind a small-ball census gate.

    status is "precondition_failed" when too few sample rows clear the
    census threshold; that outcome is a result, not an error.
    """

    status: str
    lower_ratio: float
    estimate: float
    stderr: float
    census_count: int
    required_count: float
    eta: float
    census_fraction: float
    z_trials: int

    def __post_init__(self) -> None:
        if self.status not in ("ok", "precondition_failed"):
            raise InvariantError(f"unknown status {self.status!r}")
        if self.status == "ok" and not self.lower_ratio > 0.0:
            raise InvariantError("a passing run must report a positive ratio")


def conditional_mean_ratio(
    gamma: np.ndarray,
    z_spec: DistributionSpec,
    norm: NormSpec,
    v: Direction,
    z_trials: int,
    *,
    eta: float = 0.5,
    census_fraction: float = 0.25,
    gaussian_mean: float | None = None,
    seed: int = 0,
) -> ConditionalMeanResult:
    """Estimate E_Z Psi(v)/E||G|| when enough rows project past eta.

    The census counts sample rows (recovered as sqrt(m) * Gamma) whose
    projection on v has magnitude at least eta; fewer than
    census_fraction * m such rows yields a precondition_failed result.
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim != 2:
        raise ShapeError("gamma must be 2-d")
    m, d = gamma.shape
    if not isinstance(z_spec, DistributionSpec) or z_spec.kind not in _IID_COORDINATE_KINDS:
        raise ParameterError("mixing law must be a product law with independent coordinates")
    if not isinstance(norm, NormSpec) or norm.n != z_spec.d:
        raise ParameterError(f"norm must be a NormSpec on R^{z_spec.d}")
    if not isinstance(v, Direction) or v.d != d:
        raise ParameterError(f"v must be a unit direction in R^{d}")
    if not isinstance(z_trials, (int, np.integer)) or z_trials < 1:
        raise ParameterError(f"need at least one mixing draw, got {z_trials!r}")
    if not eta > 0.0:
        raise ParameterError(f"census threshold must be positive, got {eta!r}")
    if not 0.0 < census_fraction <= 1.0:
        raise ParameterError(f"census fraction must lie in (0, 1], got {census_fraction!r}")
    if gaussian_mean is None:
        gaussian_mean = norm.analytic_gaussian_mean()
        if gaussian_mean is None:
            raise ParameterError(
                "no closed-form gaussian mean for this norm; pass gaussian_mean explicitly"
            )

    coeff = gamma @ v.coords
    census_count = int(np.sum(np.abs(math.sqrt(m) * coeff) >= eta))
    required = census_fraction * m
    if census_count < required:
        return ConditionalMeanResult(
            status="precondition_failed",
            lower_ratio=float("nan"),
            estimate=float("nan"),
            stderr=float("nan"),
            census_count=census_count,
            required_count=required,
            eta=float(eta),
            census_fraction=float(census_fraction),
            z_trials=int(z_trials),
        )
    rng = rng_for(seed, _CONDITIONAL_STREAM)
    values = np.empty(int(z_trials))
    for t in range(int(z_trials)):
        dmat = draw_rows(z_spec, m, rng).T
        values[t] = norm.eval(dmat @ coeff)
    estimate = float(values.mean())
    stderr = (
        float(values.std(ddof=1) / math.sqrt(values.size)) if values.size > 1 else 0.0
    )
    return ConditionalMeanResult(
        status="ok",
        lower_ratio=estimate / gaussian_mean,
        estimate=estimate,
        stderr=stderr,
        census_count=census_count,
        required_count=required,
        eta=float(eta),
        census_fraction=float(census_fraction),
        z_trials=int(z_trials),
    )
