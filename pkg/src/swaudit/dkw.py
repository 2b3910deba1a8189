"""Scale-sensitive empirical CDF auditing along one-dimensional projections.

The classical DKW band is uniform in t; the machinery here instead allows the
deviation |F_m(t) - F(t)| to grow like sqrt(cap * gamma(F(t))) * log(e/gamma)
where gamma measures the distance of F(t) to the edges {0, 1}.  The module
provides the perturbed identity levels that certify empirical quantiles, a
clause-by-clause self-check of their properties, and violation scans that
audit a sample matrix against a reference law over a set of directions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionSpec, SampleMatrix, marginal
from .errors import (
    BackendUnavailableError,
    DomainError,
    InvariantError,
    ParameterError,
)
from .maxsliced import Direction

__all__ = [
    "DkwConfig",
    "PerturbationCheck",
    "ProbeRecord",
    "SandwichRecord",
    "SandwichReport",
    "ViolationReport",
    "dkw_bound",
    "dkw_scan",
    "edge_distance",
    "empirical_cdf",
    "perturbation_properties_check",
    "perturbed_level",
    "perturbed_level_slope",
    "quantile_sandwich_check",
]


def edge_distance(u: float) -> float:
    """Distance of a CDF level to the nearer edge of [0, 1]: min(u, 1-u)."""
    uf = float(u)
    if not 0.0 <= uf <= 1.0:
        raise DomainError(f"level must lie in [0, 1], got {u!r}")
    return min(uf, 1.0 - uf)


@dataclass(frozen=True)
class DkwConfig:
    """Deviation cap plus the derived level that bounds usable quantiles.

    small_delta = kappa * cap * log^2(e/cap) marks where the perturbed levels
    become trustworthy; whenever cap <= (10*kappa)^-2 it must not exceed 1/4,
    and construction refuses configs that would break that guarantee.
    """

    delta_cap: float
    kappa: float = 400.0
    small_delta: float = field(init=False)

    def __post_init__(self) -> None:
        cap = float(self.delta_cap)
        kap = float(self.kappa)
        if not 0.0 <= cap <= 1.0:
            raise ParameterError(f"deviation cap must lie in [0, 1], got {self.delta_cap!r}")
        if kap < 1.0:
            raise ParameterError(f"kappa must be at least 1, got {self.kappa!r}")
        object.__setattr__(self, "delta_cap", cap)
        object.__setattr__(self, "kappa", kap)
        if cap == 0.0:
            small = 0.0
        else:
            small = kap * cap * math.log(math.e / cap) ** 2
        object.__setattr__(self, "small_delta", small)
        if cap <= (10.0 * kap) ** -2 and small > 0.25:
            raise InvariantError(
                "derived level exceeds 1/4 although the cap is below (10*kappa)^-2"
            )


def _edge_distances(us: np.ndarray) -> np.ndarray:
    return np.minimum(us, 1.0 - us)


def _perturbations(us: np.ndarray, cap: float) -> np.ndarray:
    gam = _edge_distances(us)
    return 2.0 * np.sqrt(cap * gam) * np.log(math.e / gam)


def perturbed_level(u: float, cfg: DkwConfig, sign: int) -> float:
    """The level u pushed away from the identity: u + sign*2*sqrt(cap*gamma)*log(e/gamma)."""
    uf = float(u)
    if not 0.0 < uf < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {u!r}")
    if sign not in (+1, -1):
        raise ParameterError(f"sign must be +1 or -1, got {sign!r}")
    if cfg.delta_cap == 0.0:
        return uf
    gam = min(uf, 1.0 - uf)
    plus = uf + 2.0 * math.sqrt(cfg.delta_cap * gam) * math.log(math.e / gam)
    if sign > 0:
        return plus
    return 2.0 * uf - plus  # reflection keeps the sign symmetry float-exact


def perturbed_level_slope(u: float, cfg: DkwConfig, sign: int) -> float:
    """Analytic derivative of the perturbed level; left branch at u = 1/2."""
    uf = float(u)
    if not 0.0 < uf < 1.0:
        raise DomainError(f"level must lie in (0, 1), got {u!r}")
    if sign not in (+1, -1):
        raise ParameterError(f"sign must be +1 or -1, got {sign!r}")
    if cfg.delta_cap == 0.0:
        return 1.0
    if uf <= 0.5:
        gam, orient = uf, float(sign)
    else:
        gam, orient = 1.0 - uf, -float(sign)
    return 1.0 + orient * math.sqrt(cfg.delta_cap / gam) * (math.log(math.e / gam) - 2.0)


@dataclass(frozen=True)
class PerturbationCheck:
    """Clause-by-clause audit of the perturbed levels on a grid.

    Margins are ratios of the attained quantity to its allowed bound, so any
    value above 1 marks the clause that failed and where.
    """

    grid: np.ndarray
    band_ok: bool
    closeness_ok: bool
    monotone_ok: bool
    slope_ok: bool
    closeness_margins: np.ndarray
    slope_margins: np.ndarray

    @property
    def passed(self) -> bool:
        return self.band_ok and self.closeness_ok and self.monotone_ok and self.slope_ok


def perturbation_properties_check(cfg: DkwConfig, grid_n: int) -> PerturbationCheck:
    """Verify the perturbed-level clauses on a grid of [small_delta, 1-small_delta].

    Requires the proof regime (kappa >= 400 and cap <= (10*kappa)^-2, cap > 0):
    there every clause is provably true, so a failure indicates a coding bug
    rather than a bad parameter choice.
    """
    if cfg.kappa < 400.0:
        raise ParameterError(f"properties check needs kappa >= 400, got {cfg.kappa!r}")
    if cfg.delta_cap <= 0.0:
        raise ParameterError("properties check needs a positive deviation cap")
    if cfg.delta_cap > (10.0 * cfg.kappa) ** -2:
        raise ParameterError(
            f"cap {cfg.delta_cap!r} exceeds (10*kappa)^-2 = {(10.0 * cfg.kappa) ** -2!r}"
        )
    if grid_n < 2:
        raise ParameterError(f"grid needs at least 2 points, got {grid_n}")

    cap = cfg.delta_cap
    us = np.linspace(cfg.small_delta, 1.0 - cfg.small_delta, int(grid_n))
    gam = _edge_distances(us)
    bump = _perturbations(us, cap)
    plus = us + bump
    minus = 2.0 * us - plus

    band_ok = bool(
        np.all((plus >= cap) & (plus <= 1.0 - cap) & (minus >= cap) & (minus <= 1.0 - cap))
    )
    closeness_margins = bump / (gam / 10.0)
    closeness_ok = bool(np.all(closeness_margins <= 1.0))
    monotone_ok = bool(np.all(np.diff(plus) > 0.0) and np.all(np.diff(minus) > 0.0))

    # derivative clause, via the analytic slope on the gamma = u branch
    # mirrored onto the upper half
    lower = us <= 0.5
    drift = np.sqrt(cap / gam) * (np.log(math.e / gam) - 2.0)
    drift[~lower] = -drift[~lower]
    slope_bound = 3.0 * np.sqrt(cap / gam) * np.log(math.e / gam)
    slope_margins = np.maximum(np.abs(drift), np.abs(-drift)) / slope_bound
    slope_ok = bool(np.all(slope_margins <= 1.0))

    return PerturbationCheck(
        grid=us,
        band_ok=band_ok,
        closeness_ok=closeness_ok,
        monotone_ok=monotone_ok,
        slope_ok=slope_ok,
        closeness_margins=closeness_margins,
        slope_margins=slope_margins,
    )


def dkw_bound(f_true: float, cfg: DkwConfig, with_log: bool = True) -> float:
    """Allowed |F_m - F| at a point with true CDF value f_true."""
    f = float(f_true)
    if not 0.0 < f < 1.0:
        raise DomainError(f"true CDF value must lie in (0, 1), got {f_true!r}")
    gam = min(f, 1.0 - f)
    base = math.sqrt(cfg.delta_cap * gam)
    if not with_log:
        return base
    return base * math.log(math.e / gam)


def empirical_cdf(sorted_values: np.ndarray, ts: np.ndarray) -> np.ndarray:
    """Exact empirical CDF at each probe: integer counts divided once by m."""
    values = np.asarray(sorted_values, dtype=np.float64)
    counts = np.searchsorted(values, np.asarray(ts, dtype=np.float64), side="right")
    return counts / values.size


@dataclass(frozen=True)
class ProbeRecord:
    """One scored probe of a violation scan; level is the probed t."""

    theta_id: int
    level: float
    f_true: float
    f_emp: float
    bound: float
    ratio: float
    violated: bool


@dataclass(frozen=True)
class ViolationReport:
    """Outcome of a direction-by-direction CDF deviation scan."""

    probes: int
    excluded: int
    violations: int
    worst_ratio: float
    worst_ratio_nolog: float
    records: tuple[ProbeRecord, ...]
    skipped_dirs: int = 0

    def __post_init__(self) -> None:
        if self.violations > self.probes:
            raise InvariantError("more violations than scored probes")
        if self.worst_ratio < 0.0:
            raise InvariantError("worst ratio cannot be negative")


def _as_directions(dirs) -> list[Direction]:
    out = []
    for entry in dirs:
        if isinstance(entry, Direction):
            out.append(entry)
        else:
            out.append(Direction(coords=np.asarray(entry, dtype=np.float64)))
    if not out:
        raise ParameterError("need at least one probe direction")
    return out


def dkw_scan(
    sample: SampleMatrix,
    ref: DistributionSpec,
    cfg: DkwConfig,
    dirs,
    t_grid: int,
) -> ViolationReport:
    """Audit |F_m - F| against the scale-sensitive bound over directions.

    Probes sit at true quantiles of the midpoint levels (j+1/2)/t_grid, so
    they cover the usable band instead of wasting draws in the tails.  Probes
    whose true CDF value leaves [cap, 1-cap] are excluded, not scored.
    Directions whose projected CDF has no closed form or enumeration are
    skipped and counted.  Deterministic given (sample, dirs, t_grid).
    """
    if cfg.delta_cap <= 0.0:
        raise ParameterError("scan needs a positive deviation cap")
    if t_grid < 1:
        raise ParameterError(f"need at least one probe per direction, got {t_grid}")
    directions = _as_directions(dirs)
    if sample.d != ref.d:
        raise ParameterError(f"sample lives in d={sample.d}, reference in d={ref.d}")

    cap = cfg.delta_cap
    levels = (np.arange(int(t_grid)) + 0.5) / int(t_grid)
    probes = excluded = violations = skipped = 0
    worst = worst_nolog = 0.0
    records: list[ProbeRecord] = []

    for theta_id, direction in enumerate(directions):
        theta = direction.coords
        try:
            marg = marginal(ref, theta, mc_size=0)
        except BackendUnavailableError:
            skipped += 1
            continue
        proj = np.sort(sample.values @ theta)
        ts = np.asarray(marg.quantile(levels), dtype=np.float64)
        f_true = np.asarray(marg.cdf(ts), dtype=np.float64)
        f_emp = empirical_cdf(proj, ts)
        for t, f, fm in zip(ts, f_true, f_emp):
            if not cap <= f <= 1.0 - cap:
                excluded += 1
                continue
            probes += 1
            gam = min(f, 1.0 - f)
            base = math.sqrt(cap * gam)
            bound = base * math.log(math.e / gam)
            dev = abs(fm - f)
            ratio = dev / bound
            worst = max(worst, ratio)
            worst_nolog = max(worst_nolog, dev / base)
            hit = dev > bound
            violations += int(hit)
            records.append(
                ProbeRecord(
                    theta_id=theta_id,
                    level=float(t),
                    f_true=float(f),
                    f_emp=float(fm),
                    bound=float(bound),
                    ratio=float(ratio),
                    violated=hit,
                )
            )

    return ViolationReport(
        probes=probes,
        excluded=excluded,
        violations=violations,
        worst_ratio=worst,
        worst_ratio_nolog=worst_nolog,
        records=tuple(records),
        skipped_dirs=skipped,
    )


@dataclass(frozen=True)
class SandwichRecord:
    """One empirical-quantile probe; level is the quantile order u."""

    theta_id: int
    level: float
    lo: float
    hi: float
    value: float
    ok: bool


@dataclass(frozen=True)
class SandwichReport:
    """Whether empirical quantiles stay inside their perturbed-level windows."""

    probes: int
    failures: int
    pass_rate: float
    records: tuple[SandwichRecord, ...]
    excluded: int = 0
    skipped_dirs: int = 0

    def __post_init__(self) -> None:
        if self.failures > self.probes:
            raise InvariantError("more failures than probes")


def quantile_sandwich_check(
    sample: SampleMatrix,
    ref: DistributionSpec,
    cfg: DkwConfig,
    dirs,
    u_grid: int,
) -> SandwichReport:
    """Check F_m^{-1}(u) against [F^{-1}(lo level), F^{-1}(hi level)].

    Levels are midpoints of [small_delta, 1-small_delta]; the result is a
    reported pass rate, never an assertion (the window only holds on the
    high-probability deviation event).  Probes whose perturbed levels leave
    (0, 1) are excluded; directions without an exact CDF are skipped.
    """
    if u_grid < 1:
        raise ParameterError(f"need at least one probe per direction, got {u_grid}")
    if cfg.small_delta >= 0.5:
        raise ParameterError(
            f"derived level {cfg.small_delta!r} leaves no usable quantile range"
        )
    directions = _as_directions(dirs)
    if sample.d != ref.d:
        raise ParameterError(f"sample lives in d={sample.d}, reference in d={ref.d}")

    delta = cfg.small_delta
    us = delta + (np.arange(int(u_grid)) + 0.5) * (1.0 - 2.0 * delta) / int(u_grid)
    m = sample.m
    ks = np.clip(np.ceil(us * m).astype(np.int64) - 1, 0, m - 1)

    probes = failures = excluded = skipped = 0
    records: list[SandwichRecord] = []
    for theta_id, direction in enumerate(directions):
        theta = direction.coords
        try:
            marg = marginal(ref, theta, mc_size=0)
        except BackendUnavailableError:
            skipped += 1
            continue
        proj = np.sort(sample.values @ theta)
        for u, k in zip(us, ks):
            lo_level = perturbed_level(float(u), cfg, -1)
            hi_level = perturbed_level(float(u), cfg, +1)
            if not (0.0 < lo_level and hi_level < 1.0):
                excluded += 1
                continue
            lo = float(marg.quantile(lo_level))
            hi = float(marg.quantile(hi_level))
            value = float(proj[k])
            ok = lo <= value <= hi
            probes += 1
            failures += int(not ok)
            records.append(
                SandwichRecord(
                    theta_id=theta_id,
                    level=float(u),
                    lo=lo,
                    hi=hi,
                    value=value,
                    ok=ok,
                )
            )

    rate = 1.0 if probes == 0 else (probes - failures) / probes
    return SandwichReport(
        probes=probes,
        failures=failures,
        pass_rate=rate,
        records=tuple(records),
        excluded=excluded,
        skipped_dirs=skipped,
    )
