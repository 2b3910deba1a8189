"""Acceptance audit: thirteen end-to-end checks, one PASS/FAIL line each.

Run as `pytest tests/test_acceptance.py -v -s` to see the per-criterion
lines; every check states its measured numbers so a failure is actionable.
The campaign-backed checks (7, 10, 12) run the real harness experiments at
their shipped default configurations.
"""

from __future__ import annotations

import math
import pathlib

import numpy as np
import pytest
from scipy.special import ndtri

from swaudit import dkw
from swaudit import dvoretzky as dv
from swaudit import harness as hz
from swaudit import maxsliced as ms
from swaudit import transport1d as t1
from swaudit.distributions import (
    DistributionSpec,
    RadialLaw,
    SampleMatrix,
    draw_rows,
    marginal,
    rng_for,
)

MASTER_SEED = 20260814


def _report(num: int, ok: bool, detail: str) -> None:
    print(f"[criterion {num:02d}] {'PASS' if ok else 'FAIL'}: {detail}")
    assert ok, f"criterion {num:02d} failed: {detail}"


def _gauss(d: int) -> DistributionSpec:
    return DistributionSpec(kind="standard_gaussian", d=d)


def _read_csv(path: pathlib.Path) -> tuple[list[str], list[list[str]]]:
    lines = path.read_text().splitlines()
    header = lines[0].split(",")
    return header, [line.split(",") for line in lines[1:]]


def _column(path: pathlib.Path, name: str) -> list[str]:
    header, rows = _read_csv(path)
    j = header.index(name)
    return [row[j] for row in rows]


# ---------------------------------------------------------------------------
# 1. sorted-pairing transport equals permutation brute force
# ---------------------------------------------------------------------------


def test_01_pairing_matches_bruteforce():
    rng = np.random.default_rng(MASTER_SEED)
    worst = 0.0
    for case in range(200):
        m = int(rng.integers(1, 9))
        style = case % 4
        if style == 0:
            x, y = rng.standard_normal(m), rng.standard_normal(m)
        elif style == 1:
            x = rng.integers(-3, 4, size=m).astype(float)
            y = rng.integers(-3, 4, size=m).astype(float)
        elif style == 2:
            x = rng.laplace(size=m) * 10.0
            y = rng.laplace(size=m) * 0.1
        else:
            x = np.repeat(rng.standard_normal(), m)  # all ties
            y = rng.standard_normal(m)
        got = t1.w2_pair(t1.sorted_slice(x), t1.sorted_slice(y))
        brute = t1.w2_bruteforce(x, y)
        worst = max(worst, abs(got - brute) / max(1.0, brute))
    _report(1, worst <= 1e-12, f"200 instances m<=8, worst rel gap {worst:.2e} (<= 1e-12)")


# ---------------------------------------------------------------------------
# 2. two-cell gaussian mean profile equals +-sqrt(2/pi)
# ---------------------------------------------------------------------------


def test_02_two_cell_gaussian_profile():
    Q = marginal(_gauss(1), np.array([1.0]))
    prof = t1.cell_mean_profile(Q, 2).values
    want = math.sqrt(2.0 / math.pi)

    # independent antiderivative oracle: each cell mean is
    # m * (phi(q_lo) - phi(q_hi)) with q at the cell edges, phi the standard
    # normal density, and phi -> 0 at the outer edges
    def phi(t: float) -> float:
        return math.exp(-0.5 * t * t) / math.sqrt(2.0 * math.pi)

    oracle_low = 2.0 * (0.0 - phi(ndtri(0.5)))
    oracle_high = 2.0 * (phi(ndtri(0.5)) - 0.0)
    gap = max(
        abs(prof[0] + want),
        abs(prof[1] - want),
        abs(prof[0] - oracle_low),
        abs(prof[1] - oracle_high),
    )
    _report(2, gap <= 1e-7, f"profile ({prof[0]:.9f}, {prof[1]:.9f}) vs +-{want:.9f}, gap {gap:.2e}")


# ---------------------------------------------------------------------------
# 3. rearrangement deviation never beats the quantile transport distance
# ---------------------------------------------------------------------------


def test_03_rearrangement_below_quantile_distance():
    rng = np.random.default_rng(MASTER_SEED + 3)
    violations = 0
    worst_margin = -math.inf
    for case in range(1000):
        m = int(rng.integers(2, 201))
        style = case % 5
        if style == 0:
            spec = _gauss(int(rng.integers(1, 7)))
        elif style == 1:
            spec = DistributionSpec(kind="rademacher_cube", d=int(rng.integers(1, 7)))
        elif style == 2:
            spec = DistributionSpec(kind="isotropic_laplace_product", d=int(rng.integers(1, 7)))
        elif style == 3:
            d = int(rng.integers(2, 7))
            spec = DistributionSpec(
                kind="sphere_radial",
                d=d,
                radial=RadialLaw.two_point(
                    a=0.5 + rng.uniform(), p=float(rng.uniform(0.1, 0.9)), b=1.5 + rng.uniform()
                ),
            )
        else:
            d = int(rng.integers(2, 5))
            spec = DistributionSpec(kind="sphere_radial", d=d, radial=RadialLaw.heavy_tail())
        theta = rng.standard_normal(spec.d)
        theta /= np.linalg.norm(theta)
        x = draw_rows(spec, m, rng_for(MASTER_SEED, 3, case)) @ theta
        mc = 200_000 if style == 4 else 10**7  # heavy tails have no closed form
        Q = marginal(spec, theta, mc_size=mc, mc_seed=case)
        xs = t1.sorted_slice(x)
        dev = t1.rearrangement_deviation(xs, t1.cell_mean_profile(Q, m))
        w2 = t1.w2_vs_quantile(xs, Q)
        margin = dev - w2
        worst_margin = max(worst_margin, margin)
        if margin > 1e-10:
            violations += 1
    _report(
        3,
        violations == 0,
        f"1000 cases m<=200, violations {violations}, worst dev-w2 margin {worst_margin:.2e}",
    )


# ---------------------------------------------------------------------------
# 4. per-direction second-moment audit against the transport distance
# ---------------------------------------------------------------------------


def test_04_per_direction_second_moment_audit():
    violations = 0
    worst = -math.inf
    Q = marginal(_gauss(1), np.array([1.0]))
    for k in range(20):
        rng = np.random.default_rng(MASTER_SEED + 100 + k)
        d = int(rng.integers(2, 9))
        m = int(rng.integers(50, 401))
        x = draw_rows(_gauss(d), m, rng_for(MASTER_SEED, 4, k))
        dirs = rng.standard_normal((500, d))
        dirs /= np.linalg.norm(dirs, axis=1)[:, None]
        for theta in dirs:
            proj = x @ theta
            lhs = abs(float(np.mean(proj**2)) - 1.0)
            w = t1.w2_vs_quantile(t1.sorted_slice(proj), Q)
            gap = lhs - w * (w + 2.0)
            worst = max(worst, gap)
            if gap > 1e-10:
                violations += 1
    _report(
        4,
        violations == 0,
        f"10^4 directions x 20 samples, violations {violations}, worst margin {worst:.2e}",
    )


# ---------------------------------------------------------------------------
# 5. alternating top-subset estimator vs exhaustive enumeration
# ---------------------------------------------------------------------------


def test_05_top_subset_estimator_vs_bruteforce():
    rng = np.random.default_rng(MASTER_SEED + 5)
    overshoots = 0
    matches = 0
    for case in range(100):
        d = int(rng.integers(1, 4))
        m = int(rng.integers(4, 11))
        s = int(rng.integers(1, min(3, m) + 1))
        kind = ("standard_gaussian", "rademacher_cube", "isotropic_laplace_product")[case % 3]
        sample = SampleMatrix(values=draw_rows(DistributionSpec(kind=kind, d=d), m, rng_for(MASTER_SEED, 5, case)))
        alt = ms.top_subset_norm(sample, s, restarts=8, seed=case)
        brute = ms.top_subset_norm_bruteforce(sample, s)
        if alt > brute + 1e-12:
            overshoots += 1
        if abs(alt - brute) <= 1e-9:
            matches += 1
    _report(
        5,
        overshoots == 0 and matches >= 95,
        f"100 instances, overshoots {overshoots} (need 0), exact matches {matches} (need >= 95)",
    )


# ---------------------------------------------------------------------------
# 6. gradient ascent tracks the exhaustive angular grid in the plane
# ---------------------------------------------------------------------------


def test_06_ascent_tracks_planar_grid():
    spec = _gauss(2)
    close = 0
    worst = 0.0
    for k in range(100):
        x = SampleMatrix(values=draw_rows(spec, 500, rng_for(MASTER_SEED, 6, k)))
        got = ms.sw2_gradient_ascent(x, spec, restarts=8, seed=k).value
        grid = ms.sw2_grid_2d(x, spec, grid_n=3600)
        gap = abs(got - grid)
        worst = max(worst, gap)
        if gap <= 1e-3:
            close += 1
    _report(6, close >= 90, f"100 gaussian d=2 m=500 runs, |ascent-grid|<=1e-3 in {close} (need >= 90), worst gap {worst:.2e}")


# ---------------------------------------------------------------------------
# 7. decay exponents of the sliced distance across laws
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def sw2_rate_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("sw2_rate")
    cfg = hz.config_from_mapping("sw2_rate", {}, seed=MASTER_SEED, out_dir=str(out))
    assert hz.run(cfg) == 0
    return out


def test_07_rate_exponents(sw2_rate_dir):
    header, rows = _read_csv(sw2_rate_dir / "sw2_rate_fits.csv")
    slopes = {}
    r2s = {}
    for row in rows:
        rec = dict(zip(header, row))
        if rec["aggregate"] == "mean":
            slopes[rec["law"]] = float(rec["slope"])
            r2s[rec["law"]] = float(rec["r_squared"])
    windows = {
        "rademacher_cube": (-0.35, -0.15),
        "standard_gaussian": (-0.60, -0.35),
        "isotropic_laplace_product": (-0.60, -0.35),
    }
    short = {
        "rademacher_cube": "cube",
        "standard_gaussian": "gaussian",
        "isotropic_laplace_product": "laplace",
    }
    ok = all(windows[law][0] <= slopes[law] <= windows[law][1] for law in windows)
    ok = ok and all(r2s[law] >= 0.95 for law in windows)
    detail = ", ".join(
        f"{short[law]} slope={slopes[law]:.3f} r2={r2s[law]:.3f}" for law in windows
    )
    _report(7, ok, f"d=5, m=2^8..2^14, 50 trials: {detail}")


# ---------------------------------------------------------------------------
# 8. sign-imbalance witness: flag decay and per-trial lower bound
# ---------------------------------------------------------------------------


def test_08_witness_flag_decay_and_bound(tmp_path):
    cfg = hz.config_from_mapping(
        "lower_bound_witness", {}, trials=10000, seed=MASTER_SEED, out_dir=str(tmp_path)
    )
    assert hz.run(cfg) == 0
    header, rows = _read_csv(tmp_path / "witness.csv")
    idx = {name: header.index(name) for name in ("m", "delta", "w2", "flag")}
    freq = {}
    bound_failures = 0
    for row in rows:
        m = int(row[idx["m"]])
        delta = float(row[idx["delta"]])
        w2 = float(row[idx["w2"]])
        flag = row[idx["flag"]] == "1"
        freq.setdefault(m, []).append(flag)
        if flag:
            mass = (w2 / 2.0) ** 2  # exact interval mass from this trial's value
            if w2 < delta**0.25 * math.sqrt(mass) - 1e-15:
                bound_failures += 1
    rates = {m: float(np.mean(v)) for m, v in sorted(freq.items())}
    decreasing = rates[100] > rates[200] > rates[400]
    _report(
        8,
        decreasing and bound_failures == 0,
        f"flag rates {rates[100]:.4f} > {rates[200]:.4f} > {rates[400]:.4f}, "
        f"per-trial bound failures {bound_failures}",
    )


# ---------------------------------------------------------------------------
# 9. perturbed-level clauses on a dense grid
# ---------------------------------------------------------------------------


def test_09_perturbed_level_clauses():
    check = dkw.perturbation_properties_check(
        dkw.DkwConfig(delta_cap=1e-8, kappa=400.0), grid_n=10**4
    )
    flags = (check.band_ok, check.closeness_ok, check.monotone_ok, check.slope_ok)
    _report(
        9,
        check.passed,
        f"kappa=400, cap=1e-8, 10^4-point grid: band/closeness/monotone/slope = {flags}",
    )


# ---------------------------------------------------------------------------
# 10. slab-bound violation rate is monotone in the sample size
# ---------------------------------------------------------------------------


def test_10_dkw_violation_monotonicity(tmp_path):
    cfg = hz.config_from_mapping("dkw_scan", {}, seed=MASTER_SEED, out_dir=str(tmp_path))
    assert hz.run(cfg) == 0
    header, rows = _read_csv(tmp_path / "dkw_scan_summary.csv")
    idx = {name: header.index(name) for name in ("m", "violation_rate", "worst_ratio")}
    rates = {}
    good_ratio = {}
    for row in rows:
        m = int(row[idx["m"]])
        rates.setdefault(m, []).append(float(row[idx["violation_rate"]]))
        good_ratio.setdefault(m, []).append(float(row[idx["worst_ratio"]]) <= 1.0)
    mean_small = float(np.mean(rates[800]))
    mean_large = float(np.mean(rates[6400]))
    frac_good = float(np.mean(good_ratio[6400]))
    _report(
        10,
        mean_large <= mean_small and frac_good >= 0.9,
        f"mean violation rate m=6400 {mean_large:.4f} <= m=800 {mean_small:.4f}, "
        f"worst_ratio<=1 in {frac_good:.0%} of trials at m=6400 (need >= 90%)",
    )


# ---------------------------------------------------------------------------
# 11. critical dimension across the three classical norms
# ---------------------------------------------------------------------------


def test_11_critical_dimension():
    want_l1 = 200.0 / math.pi
    l1 = dv.critical_dimension(dv.NormSpec(p=1.0, n=100), 10**5, MASTER_SEED)
    l1_mc = dv.critical_dimension(dv.NormSpec(p=1.0, n=100), 10**5, MASTER_SEED, force_mc=True)
    l2 = dv.critical_dimension(dv.NormSpec(p=2.0, n=100), 10**5, MASTER_SEED)
    linf = dv.critical_dimension(dv.NormSpec(p=math.inf, n=1000), 10**5, MASTER_SEED)
    ok = (
        abs(l1.d_star - want_l1) <= 1e-9
        and abs(l1_mc.d_star - want_l1) <= 0.02 * want_l1
        and 99.0 <= l2.d_star <= 100.0
        and 9.0 <= linf.d_star <= 13.0
    )
    _report(
        11,
        ok,
        f"sum-norm {l1.d_star:.6f} (closed) / {l1_mc.d_star:.3f} (10^5 MC) vs {want_l1:.6f}, "
        f"euclidean {l2.d_star:.4f} in [99,100], max-norm {linf.d_star:.3f} in [9,13]",
    )


# ---------------------------------------------------------------------------
# 12. two-stage ensemble oscillation and exact three-part reconstruction
# ---------------------------------------------------------------------------


@pytest.fixture(scope="session")
def dm_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("dm")
    cfg = hz.config_from_mapping("dm_oscillation", {}, seed=MASTER_SEED, out_dir=str(out))
    assert hz.run(cfg) == 0
    return out


def test_12_two_stage_oscillation_and_reconstruction(dm_dir):
    direct = [float(v) for v in _column(dm_dir / "dm_gaussian_direct.csv", "oscillation")]
    staged = [float(v) for v in _column(dm_dir / "dm_two_stage.csv", "oscillation")]
    gaps = [float(v) for v in _column(dm_dir / "dm_decomposition.csv", "recon_gap")]
    med_direct = float(np.median(direct))
    med_staged = float(np.median(staged))
    worst_gap = max(gaps)
    ok = med_staged <= 2.0 * med_direct and worst_gap <= 1e-10
    _report(
        12,
        ok,
        f"20 trials: median oscillation two-stage {med_staged:.4f} vs 2x direct "
        f"{2.0 * med_direct:.4f}; worst reconstruction gap {worst_gap:.2e} over "
        f"{len(gaps)} probed directions",
    )


# ---------------------------------------------------------------------------
# 13. byte-identical CSV bodies on re-run for every campaign kind
# ---------------------------------------------------------------------------


def test_13_campaign_determinism(tmp_path):
    smokes = {
        "sw2_rate": {"m_grid": [64, 128, 256], "trials": 3, "restarts": 2, "d": 3},
        "dkw_scan": {"m_grid": [200], "trials": 2, "n_dirs": 4, "t_grid": 10, "d": 3},
        "lower_bound_witness": {"m_grid": [100, 200], "trials": 500},
        "dm_oscillation": {"n": 40, "d": 2, "trials": 2, "n_dirs": 6, "mc_samples": 1500},
        "h_statistics": {"m_grid": [64, 128], "s_values": [1, 4], "trials": 2, "restarts": 2},
    }
    mismatches = []
    files = 0
    for kind, overrides in smokes.items():
        dirs = []
        for rep in ("a", "b"):
            out = tmp_path / kind / rep
            cfg = hz.config_from_mapping(kind, dict(overrides), seed=MASTER_SEED, out_dir=str(out))
            assert hz.run(cfg) == 0
            dirs.append(out)
        names = sorted(p.name for p in dirs[0].glob("*.csv"))
        assert names, f"{kind} produced no CSV output"
        for name in names:
            files += 1
            if (dirs[0] / name).read_bytes() != (dirs[1] / name).read_bytes():
                mismatches.append(f"{kind}/{name}")
    _report(
        13,
        not mismatches,
        f"all 5 campaign kinds re-run: {files} CSV files byte-identical"
        + (f"; mismatches {mismatches}" if mismatches else ""),
    )
