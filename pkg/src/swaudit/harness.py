"""Seeded Monte Carlo campaigns with deterministic CSV emission.

Each experiment draws per-trial seeds from disjoint streams of one master
seed, runs the relevant audit, and writes fixed-schema CSV files whose
bytes depend only on the configuration.  Floats are serialized with 17
significant digits, booleans as 1/0, and files never embed timestamps, so
re-running a campaign reproduces the output exactly.
"""

from __future__ import annotations

import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .distributions import (
    DistributionSpec,
    RadialLaw,
    SampleMatrix,
    draw_rows,
    rng_for,
)
from .dkw import DkwConfig, dkw_scan
from .dvoretzky import (
    EnsembleConfig,
    NormSpec,
    build_ensemble,
    build_two_stage,
    critical_dimension,
    decomposition_diagnostics,
    direction_set,
    embedding_oscillation,
)
from .errors import (
    AuditError,
    DomainError,
    InvariantError,
    NumericError,
    ParameterError,
)
from .maxsliced import (
    isometry_defect,
    matrix_stats,
    sw2_gradient_ascent,
    uniform_directions,
)
from .transport1d import bernoulli_witness

__all__ = [
    "EXPERIMENT_KINDS",
    "ExperimentConfig",
    "RateFit",
    "fit_rate",
    "config_from_mapping",
    "load_config_file",
    "run",
]

EXPERIMENT_KINDS = (
    "sw2_rate",
    "dkw_scan",
    "lower_bound_witness",
    "dm_oscillation",
    "h_statistics",
)

_PRODUCT_LAWS = ("standard_gaussian", "rademacher_cube", "isotropic_laplace_product")

# Disjoint seed-stream tags, one per experiment family.
_TAG_SW2 = 10
_TAG_DKW = 20
_TAG_WITNESS = 30
_TAG_DM = 40
_TAG_HSTAT = 50

_DEFAULTS: dict[str, dict] = {
    "sw2_rate": {
        "laws": _PRODUCT_LAWS,
        "d": 5,
        "m_grid": (256, 512, 1024, 2048, 4096, 8192, 16384),
        "trials": 50,
        "restarts": 8,
    },
    "dkw_scan": {
        "laws": ("standard_gaussian",),
        "d": 5,
        "delta": 0.05,
        "kappa": 400.0,
        "m_grid": (800, 6400),
        "trials": 20,
        "n_dirs": 32,
        "t_grid": 40,
    },
    "lower_bound_witness": {
        "delta": 0.04,
        "m_grid": (100, 200, 400),
        "trials": 10_000,
    },
    "dm_oscillation": {
        "p": math.inf,
        "n": 1000,
        "d": 2,
        "trials": 20,
        "n_dirs": 64,
        "mc_samples": 4000,
    },
    "h_statistics": {
        "laws": ("standard_gaussian",),
        "d": 5,
        "m_grid": (256, 1024, 4096),
        "s_values": (1, 4, 16),
        "trials": 20,
        "restarts": 8,
    },
}


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    """One campaign: an experiment kind plus its grids, seed, and output."""

    kind: str
    laws: tuple[str, ...] = ()
    d: int = 1
    n: int = 1
    p: float = 2.0
    m_grid: tuple[int, ...] = ()
    s_values: tuple[int, ...] = ()
    delta: float = 0.0
    kappa: float = 400.0
    trials: int = 1
    seed: int = 0
    out_dir: str = "results"
    n_dirs: int = 1
    t_grid: int = 1
    restarts: int = 1
    mc_samples: int = 1000

    def __post_init__(self) -> None:
        if self.kind not in EXPERIMENT_KINDS:
            raise ParameterError(
                f"unknown experiment {self.kind!r}; expected one of {EXPERIMENT_KINDS}"
            )
        object.__setattr__(self, "laws", tuple(str(law) for law in self.laws))
        object.__setattr__(self, "m_grid", tuple(int(m) for m in self.m_grid))
        object.__setattr__(self, "s_values", tuple(int(s) for s in self.s_values))
        object.__setattr__(self, "p", float(self.p))
        if not isinstance(self.trials, (int, np.integer)) or self.trials < 1:
            raise ParameterError(f"trial count must be >= 1, got {self.trials!r}")
        if not isinstance(self.seed, (int, np.integer)):
            raise ParameterError(f"master seed must be an integer, got {self.seed!r}")

        kind = self.kind
        if kind in ("sw2_rate", "dkw_scan", "lower_bound_witness", "h_statistics"):
            if len(self.m_grid) == 0:
                raise ParameterError(f"{kind} needs a nonempty sample-size grid")
            if any(m < 4 for m in self.m_grid):
                raise ParameterError("sample sizes must be at least 4")
        if kind in ("sw2_rate", "dkw_scan", "h_statistics"):
            if len(self.laws) == 0:
                raise ParameterError(f"{kind} needs at least one law")
            for law in self.laws:
                if law not in _PRODUCT_LAWS:
                    raise ParameterError(
                        f"campaign law must be one of {_PRODUCT_LAWS}, got {law!r}"
                    )
            if self.d < 1:
                raise ParameterError(f"dimension must be positive, got {self.d!r}")
            if self.restarts < 1:
                raise ParameterError(f"restarts must be >= 1, got {self.restarts!r}")
        if kind in ("dkw_scan", "h_statistics") and len(self.laws) != 1:
            raise ParameterError(f"{kind} runs one law per campaign")
        if kind == "dkw_scan":
            if not 0.0 < self.delta <= 1.0:
                raise ParameterError(f"scan scale must lie in (0, 1], got {self.delta!r}")
            if self.kappa < 1.0:
                raise ParameterError(f"kappa must be >= 1, got {self.kappa!r}")
            if self.t_grid < 1 or self.n_dirs < 1:
                raise ParameterError("probe grids must be nonempty")
        if kind == "lower_bound_witness" and not 0.0 < self.delta < 0.25:
            raise ParameterError(f"witness delta must lie in (0, 1/4), got {self.delta!r}")
        if kind == "dm_oscillation":
            if self.n < 1 or self.d < 1 or self.n_dirs < 1:
                raise ParameterError("dm_oscillation needs positive n, d, and n_dirs")
            if not self.p >= 1.0:
                raise ParameterError(f"norm exponent must satisfy p >= 1, got {self.p!r}")
            if self.p not in (1.0, 2.0) and self.mc_samples < 1000:
                raise ParameterError("critical-dimension Monte Carlo needs >= 1000 samples")
        if kind == "h_statistics":
            if len(self.s_values) == 0:
                raise ParameterError("h_statistics needs a nonempty subset-size grid")
            if any(s < 1 for s in self.s_values):
                raise ParameterError("subset sizes must be positive")
            if max(self.s_values) > min(self.m_grid):
                raise ParameterError("subset sizes cannot exceed the smallest sample size")


def config_from_mapping(kind: str, mapping: dict, **overrides) -> ExperimentConfig:
    """Build a config from defaults, a JSON-style mapping, and CLI overrides."""
    if kind not in EXPERIMENT_KINDS:
        raise ParameterError(
            f"unknown experiment {kind!r}; expected one of {EXPERIMENT_KINDS}"
        )
    if not isinstance(mapping, dict):
        raise ParameterError(f"experiment settings must be an object, got {type(mapping)}")
    allowed = set(_DEFAULTS[kind]) | {"trials", "seed", "out_dir"}
    unknown = set(mapping) - allowed
    if unknown:
        raise ParameterError(
            f"unknown settings for {kind}: {sorted(unknown)}; allowed: {sorted(allowed)}"
        )
    merged = dict(_DEFAULTS[kind])
    merged.update(mapping)
    merged.update({k: v for k, v in overrides.items() if v is not None})
    if isinstance(merged.get("p"), str):
        merged["p"] = float(merged["p"])
    return ExperimentConfig(kind=kind, **merged)


def load_config_file(path) -> dict:
    """Read a JSON config file with one top-level object per experiment."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ParameterError(f"cannot read config file {path}: {exc}") from exc
    try:
        loaded = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParameterError(f"config file {path} is not valid JSON: {exc}") from exc
    if not isinstance(loaded, dict):
        raise ParameterError("config file must contain one object per experiment")
    return loaded


# ---------------------------------------------------------------------------
# rate fitting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RateFit:
    """Least-squares line through (log m, log value) points."""

    slope: float
    intercept: float
    r_squared: float
    points: tuple[tuple[float, float], ...]

    def __post_init__(self) -> None:
        if not math.isfinite(self.slope) or not math.isfinite(self.intercept):
            raise InvariantError("rate fit produced a non-finite line")
        if not 0.0 <= self.r_squared <= 1.0:
            raise InvariantError(f"r_squared must lie in [0, 1], got {self.r_squared}")


def fit_rate(points) -> RateFit:
    """Fit log(value) = slope * log(m) + intercept by least squares.

    A constant series fits its own horizontal line, so its r_squared is 1.
    """
    pts = [(int(m), float(v)) for m, v in points]
    if len(pts) < 3:
        raise ParameterError(f"rate fit needs at least 3 points, got {len(pts)}")
    for m, v in pts:
        if m < 1:
            raise ParameterError(f"sample sizes must be positive, got {m}")
        if not v > 0.0:
            raise DomainError(f"rate fit needs positive values, got {v}")
    if len({m for m, _ in pts}) < 2:
        raise ParameterError("rate fit needs at least two distinct sample sizes")
    log_m = np.log([m for m, _ in pts])
    log_v = np.log([v for _, v in pts])
    design = np.column_stack((log_m, np.ones_like(log_m)))
    (slope, intercept), *_ = np.linalg.lstsq(design, log_v, rcond=None)
    residuals = log_v - (slope * log_m + intercept)
    ss_res = float(residuals @ residuals)
    centered = log_v - log_v.mean()
    ss_tot = float(centered @ centered)
    if ss_tot == 0.0:
        r_squared = 1.0
    else:
        r_squared = min(1.0, max(0.0, 1.0 - ss_res / ss_tot))
    return RateFit(
        slope=float(slope),
        intercept=float(intercept),
        r_squared=r_squared,
        points=tuple(zip(map(float, log_m), map(float, log_v))),
    )


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------


def _format_cell(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    return str(value)


def _write_csv(path: Path, header: tuple[str, ...], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(_format_cell(cell) for cell in row) for row in rows)
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _mint(master: int, *path: int) -> int:
    """A 63-bit sub-seed from a master seed and a stream path."""
    return int(rng_for(master, *path).integers(0, 2**63))


def _worker_count() -> int:
    env = os.environ.get("SWAUDIT_WORKERS", "").strip()
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def _map_ordered(fn, items):
    """Apply fn over items, preserving order regardless of parallelism."""
    items = list(items)
    workers = _worker_count()
    if workers == 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _out_dir(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# campaigns
# ---------------------------------------------------------------------------


def _run_sw2_rate(cfg: ExperimentConfig) -> list[str]:
    out = _out_dir(cfg)
    lines = []
    fit_rows = []
    agg_rows = []
    for law_index, law in enumerate(cfg.laws):
        spec = DistributionSpec(kind=law, d=cfg.d)
        rows = []
        means = []
        medians = []
        for m in cfg.m_grid:

            def one_trial(trial, m=m):
                x = draw_rows(spec, m, rng_for(cfg.seed, _TAG_SW2, law_index, m, trial))
                sm = SampleMatrix(values=x)
                report = sw2_gradient_ascent(
                    sm,
                    spec,
                    restarts=cfg.restarts,
                    seed=_mint(cfg.seed, _TAG_SW2, law_index, m, trial, 1),
                )
                return (trial, m, report.value, isometry_defect(sm), report.method)

            got = _map_ordered(one_trial, range(cfg.trials))
            rows.extend(got)
            values = np.array([row[2] for row in got])
            means.append(float(values.mean()))
            medians.append(float(np.median(values)))
            agg_rows.append((law, m, means[-1], medians[-1]))
        _write_csv(
            out / f"sw2_rate_{law}.csv",
            ("trial", "m", "sw2_lower_bound", "rho", "method"),
            rows,
        )
        if len(cfg.m_grid) >= 3:
            for aggregate, series in (("mean", means), ("median", medians)):
                fit = fit_rate(list(zip(cfg.m_grid, series)))
                fit_rows.append((law, aggregate, fit.slope, fit.intercept, fit.r_squared))
                if aggregate == "mean":
                    lines.append(
                        f"sw2_rate[{law}]: slope={fit.slope:.4f} "
                        f"r_squared={fit.r_squared:.4f} over m={list(cfg.m_grid)}"
                    )
        else:
            lines.append(f"sw2_rate[{law}]: grid too short for a rate fit")
    if fit_rows:
        _write_csv(
            out / "sw2_rate_fits.csv",
            ("law", "aggregate", "slope", "intercept", "r_squared"),
            fit_rows,
        )
    _write_csv(
        out / "sw2_rate_aggregates.csv",
        ("law", "m", "mean_sw2", "median_sw2"),
        agg_rows,
    )
    return lines


def _run_dkw_scan(cfg: ExperimentConfig) -> list[str]:
    out = _out_dir(cfg)
    law = cfg.laws[0]
    spec = DistributionSpec(kind=law, d=cfg.d)
    scan_cfg = DkwConfig(delta_cap=cfg.delta, kappa=cfg.kappa)
    lines = []
    summary_rows = []
    for m in cfg.m_grid:

        def one_trial(trial, m=m):
            x = draw_rows(spec, m, rng_for(cfg.seed, _TAG_DKW, m, trial))
            dirs = uniform_directions(cfg.n_dirs, cfg.d, _mint(cfg.seed, _TAG_DKW, m, trial, 1))
            report = dkw_scan(SampleMatrix(values=x), spec, scan_cfg, dirs, cfg.t_grid)
            records = [
                (
                    trial,
                    rec.theta_id,
                    rec.level,
                    rec.f_true,
                    rec.f_emp,
                    rec.bound,
                    rec.ratio,
                    rec.violated,
                )
                for rec in report.records
            ]
            rate = report.violations / report.probes if report.probes else 0.0
            return records, (
                m,
                trial,
                report.probes,
                report.excluded,
                report.violations,
                rate,
                report.worst_ratio,
            )

        got = _map_ordered(one_trial, range(cfg.trials))
        _write_csv(
            out / f"dkw_scan_m{m}.csv",
            ("trial", "theta_id", "u_or_t", "F", "F_m", "bound", "ratio", "violated"),
            [record for records, _ in got for record in records],
        )
        summaries = [summary for _, summary in got]
        summary_rows.extend(summaries)
        rates = np.array([s[5] for s in summaries])
        ok_share = float(np.mean([s[6] <= 1.0 for s in summaries]))
        lines.append(
            f"dkw_scan m={m}: mean violation rate {rates.mean():.6f}, "
            f"worst_ratio<=1 in {ok_share:.0%} of trials"
        )
    _write_csv(
        out / "dkw_scan_summary.csv",
        ("m", "trial", "probes", "excluded", "violations", "violation_rate", "worst_ratio"),
        summary_rows,
    )
    return lines


def _run_witness(cfg: ExperimentConfig) -> list[str]:
    out = _out_dir(cfg)
    rows = []
    lines = []
    for m in cfg.m_grid:
        results = _map_ordered(
            lambda trial, m=m: bernoulli_witness(
                m, cfg.delta, _mint(cfg.seed, _TAG_WITNESS, m, trial)
            ),
            range(cfg.trials),
        )
        rows.extend(
            (trial, m, cfg.delta, res.w2, res.flag) for trial, res in enumerate(results)
        )
        freq = float(np.mean([res.flag for res in results]))
        lines.append(f"witness m={m}: flag frequency {freq:.4f}")
    _write_csv(out / "witness.csv", ("trial", "m", "delta", "w2", "flag"), rows)
    return lines


def _two_point_x_spec(d: int) -> DistributionSpec:
    """Isotropic planar-or-higher law with a symmetric two-point radius."""
    radial = RadialLaw.two_point(a=math.sqrt(d / 2.0), p=0.5, b=math.sqrt(1.5 * d))
    return DistributionSpec(kind="sphere_radial", d=d, radial=radial)


def _run_dm_oscillation(cfg: ExperimentConfig) -> list[str]:
    out = _out_dir(cfg)
    norm = NormSpec(p=cfg.p, n=cfg.n)
    d_res = critical_dimension(norm, cfg.mc_samples, _mint(cfg.seed, _TAG_DM, 0))
    m = int(math.ceil(d_res.d_star**4))
    dirs = direction_set(cfg.d, cfg.n_dirs, _mint(cfg.seed, _TAG_DM, 1))
    s = r = max(1, math.ceil(d_res.d_star))
    x_spec = _two_point_x_spec(cfg.d)
    z_spec = DistributionSpec(kind="rademacher_cube", d=cfg.n)

    def one_trial(trial):
        direct_cfg = EnsembleConfig(
            kind="gaussian_direct",
            n=cfg.n,
            d=cfg.d,
            n_dirs=cfg.n_dirs,
            seed=_mint(cfg.seed, _TAG_DM, 2, trial),
        )
        gamma_i, dmat_i = build_ensemble(direct_cfg)
        direct = embedding_oscillation(
            gamma_i, dmat_i, norm, dirs, d_star_used=d_res.d_star
        )
        staged_cfg = EnsembleConfig(
            kind="two_stage",
            n=cfg.n,
            d=cfg.d,
            m=m,
            x_spec=x_spec,
            z_spec=z_spec,
            n_dirs=cfg.n_dirs,
            seed=_mint(cfg.seed, _TAG_DM, 3, trial),
        )
        gamma, dmat = build_two_stage(staged_cfg)
        staged = embedding_oscillation(gamma, dmat, norm, dirs, d_star_used=d_res.d_star)
        decomp = []
        for dir_id, u in enumerate(dirs):
            diag = decomposition_diagnostics(
                u, gamma, dmat, s=s, r=r, norm=norm, gaussian_mean=d_res.gaussian_mean
            )
            decomp.append(
                (
                    trial,
                    dir_id,
                    diag.s,
                    diag.r,
                    diag.residual_scale,
                    diag.threshold,
                    diag.head_norm,
                    diag.heavy_norm,
                    diag.bulk_norm,
                    diag.full_norm,
                    diag.recon_gap,
                    diag.heavy_size,
                )
            )
        return direct, staged, decomp

    got = _map_ordered(one_trial, range(cfg.trials))
    report_header = ("trial", "norm", "n", "d", "m", "d_star", "lambda", "oscillation")

    def report_row(trial, report):
        return (
            trial,
            norm.label,
            report.n,
            report.d,
            report.m,
            d_res.d_star,
            report.level,
            report.oscillation,
        )

    _write_csv(
        out / "dm_gaussian_direct.csv",
        report_header,
        [report_row(t, direct) for t, (direct, _, _) in enumerate(got)],
    )
    _write_csv(
        out / "dm_two_stage.csv",
        report_header,
        [report_row(t, staged) for t, (_, staged, _) in enumerate(got)],
    )
    _write_csv(
        out / "dm_decomposition.csv",
        (
            "trial",
            "direction_id",
            "s",
            "r",
            "residual_scale",
            "threshold",
            "head_norm",
            "heavy_norm",
            "bulk_norm",
            "full_norm",
            "recon_gap",
            "heavy_size",
        ),
        [row for _, _, decomp in got for row in decomp],
    )
    direct_med = float(np.median([direct.oscillation for direct, _, _ in got]))
    staged_med = float(np.median([staged.oscillation for _, staged, _ in got]))
    return [
        f"dm_oscillation: d_star={d_res.d_star:.4f} ({d_res.method}), m={m}",
        f"dm_oscillation: median oscillation direct={direct_med:.4f} "
        f"two_stage={staged_med:.4f} ratio={staged_med / direct_med:.3f}",
    ]


def _run_h_statistics(cfg: ExperimentConfig) -> list[str]:
    out = _out_dir(cfg)
    law = cfg.laws[0]
    spec = DistributionSpec(kind=law, d=cfg.d)
    rows = []
    for m in cfg.m_grid:

        def one_trial(trial, m=m):
            x = draw_rows(spec, m, rng_for(cfg.seed, _TAG_HSTAT, m, trial))
            sm = SampleMatrix(values=x)
            stats = matrix_stats(
                sm, cfg.s_values, cfg.restarts, _mint(cfg.seed, _TAG_HSTAT, m, trial, 1)
            )
            return [
                (trial, m, cfg.d, s, stats.h_values[s], stats.rho) for s in cfg.s_values
            ]

        for trial_rows in _map_ordered(one_trial, range(cfg.trials)):
            rows.extend(trial_rows)
    _write_csv(out / "hstat.csv", ("trial", "m", "d", "s", "h_value", "rho"), rows)
    top = max(cfg.s_values)
    return [f"h_statistics[{law}]: {len(rows)} rows, subset sizes up to {top}"]


_EXPERIMENTS = {
    "sw2_rate": _run_sw2_rate,
    "dkw_scan": _run_dkw_scan,
    "lower_bound_witness": _run_witness,
    "dm_oscillation": _run_dm_oscillation,
    "h_statistics": _run_h_statistics,
}


def run(cfg: ExperimentConfig) -> int:
    """Execute one campaign; 0 on success, 1 on I/O failure, 2 on audit failure."""
    try:
        lines = _EXPERIMENTS[cfg.kind](cfg)
    except OSError as exc:
        print(f"swaudit: i/o failure: {exc}", file=sys.stderr)
        return 1
    except (InvariantError, NumericError) as exc:
        print(f"swaudit: invariant failure: {exc}", file=sys.stderr)
        return 2
    except AuditError as exc:
        print(f"swaudit: {exc}", file=sys.stderr)
        return 2
    for line in lines:
        print(line)
    return 0
