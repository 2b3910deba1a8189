"""Tests for campaign configuration, rate fitting, and CSV emission."""

import json
import math

import numpy as np
import pytest

from swaudit.errors import DomainError, InvariantError, ParameterError
from swaudit.harness import (
    EXPERIMENT_KINDS,
    ExperimentConfig,
    RateFit,
    config_from_mapping,
    fit_rate,
    load_config_file,
    run,
)
from swaudit.harness import _format_cell, _mint


# ---------------------------------------------------------------------------
# fit_rate
# ---------------------------------------------------------------------------


def test_fit_rate_noiseless_power_law():
    points = [(m, 3.0 * m ** (-0.25)) for m in (10, 100, 1000, 10000)]
    fit = fit_rate(points)
    assert fit.slope == pytest.approx(-0.25, abs=1e-12)
    assert fit.intercept == pytest.approx(math.log(3.0), abs=1e-12)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)
    assert 0.0 <= fit.r_squared <= 1.0
    assert len(fit.points) == 4
    assert fit.points[0] == (math.log(10.0), math.log(3.0 * 10 ** (-0.25)))


def test_fit_rate_constant_series():
    fit = fit_rate([(8, 2.0), (16, 2.0), (32, 2.0), (64, 2.0)])
    assert fit.slope == pytest.approx(0.0, abs=1e-14)
    assert fit.r_squared == 1.0


def test_fit_rate_gates():
    with pytest.raises(ParameterError):
        fit_rate([(8, 1.0), (16, 0.5)])  # fewer than three points
    with pytest.raises(DomainError):
        fit_rate([(8, 1.0), (16, 0.5), (32, 0.0)])  # nonpositive value
    with pytest.raises(DomainError):
        fit_rate([(8, 1.0), (16, -0.5), (32, 0.25)])
    with pytest.raises(ParameterError):
        fit_rate([(0, 1.0), (16, 0.5), (32, 0.25)])  # nonpositive size
    with pytest.raises(ParameterError):
        fit_rate([(16, 1.0), (16, 0.5), (16, 0.25)])  # degenerate abscissa


def test_rate_fit_invariants():
    with pytest.raises(InvariantError):
        RateFit(slope=0.1, intercept=0.0, r_squared=1.5, points=((0.0, 0.0),))
    with pytest.raises(InvariantError):
        RateFit(slope=math.nan, intercept=0.0, r_squared=0.5, points=((0.0, 0.0),))


# ---------------------------------------------------------------------------
# formatting and seeds
# ---------------------------------------------------------------------------


def test_cell_formatting():
    assert _format_cell(True) == "1"
    assert _format_cell(False) == "0"
    assert _format_cell(np.bool_(True)) == "1"
    assert _format_cell(7) == "7"
    assert _format_cell(np.int64(-3)) == "-3"
    assert _format_cell(0.25) == "0.25"
    assert _format_cell(1.0 / 3.0) == "0.33333333333333331"
    assert _format_cell("ascent") == "ascent"


def test_trial_seed_streams_do_not_collide():
    minted = {_mint(12345, 1, t) for t in range(10_000)}
    assert len(minted) == 10_000
    # distinct master seeds give distinct streams too
    assert _mint(1, 1, 0) != _mint(2, 1, 0)


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


def test_config_defaults_and_overrides():
    cfg = config_from_mapping("lower_bound_witness", {}, trials=50, seed=9)
    assert cfg.kind == "lower_bound_witness"
    assert cfg.trials == 50
    assert cfg.seed == 9
    assert cfg.delta == 0.04
    assert cfg.m_grid == (100, 200, 400)

    cfg2 = config_from_mapping(
        "sw2_rate", {"laws": ["standard_gaussian"], "m_grid": [32, 64], "trials": 2}
    )
    assert cfg2.laws == ("standard_gaussian",)
    assert cfg2.m_grid == (32, 64)

    inf_cfg = config_from_mapping("dm_oscillation", {"p": "inf", "n": 40, "trials": 1})
    assert math.isinf(inf_cfg.p)


def test_config_validation():
    with pytest.raises(ParameterError):
        config_from_mapping("no_such_experiment", {})
    with pytest.raises(ParameterError):
        config_from_mapping("sw2_rate", {"m_grid": []})  # empty grid
    with pytest.raises(ParameterError):
        config_from_mapping("sw2_rate", {"trials": 0})
    with pytest.raises(ParameterError):
        config_from_mapping("sw2_rate", {"bogus_knob": 1})
    with pytest.raises(ParameterError):
        config_from_mapping("lower_bound_witness", {"delta": 0.3})
    with pytest.raises(ParameterError):
        config_from_mapping("h_statistics", {"s_values": []})
    assert set(EXPERIMENT_KINDS) == {
        "sw2_rate",
        "dkw_scan",
        "lower_bound_witness",
        "dm_oscillation",
        "h_statistics",
    }


def test_load_config_file(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"sw2_rate": {"trials": 3}}), encoding="utf-8")
    loaded = load_config_file(path)
    assert loaded == {"sw2_rate": {"trials": 3}}
    bad = tmp_path / "bad.json"
    bad.write_text("{not json", encoding="utf-8")
    with pytest.raises(ParameterError):
        load_config_file(bad)


# ---------------------------------------------------------------------------
# campaigns (smoke scale)
# ---------------------------------------------------------------------------


def _read(path):
    return path.read_bytes()


def test_witness_campaign_schema_and_determinism(tmp_path):
    mapping = {"m_grid": [16, 32], "trials": 200, "delta": 0.04}
    cfg1 = config_from_mapping("lower_bound_witness", mapping, seed=3, out_dir=str(tmp_path / "a"))
    cfg2 = config_from_mapping("lower_bound_witness", mapping, seed=3, out_dir=str(tmp_path / "b"))
    assert run(cfg1) == 0
    assert run(cfg2) == 0
    body1 = _read(tmp_path / "a" / "witness.csv")
    assert body1 == _read(tmp_path / "b" / "witness.csv")
    lines = body1.decode().splitlines()
    assert lines[0] == "trial,m,delta,w2,flag"
    assert len(lines) == 1 + 2 * 200
    flags = {row.split(",")[4] for row in lines[1:]}
    assert flags <= {"0", "1"}
    # a different master seed changes the body
    cfg3 = config_from_mapping("lower_bound_witness", mapping, seed=4, out_dir=str(tmp_path / "c"))
    assert run(cfg3) == 0
    assert _read(tmp_path / "c" / "witness.csv") != body1


def test_sw2_rate_campaign_smoke(tmp_path):
    mapping = {
        "laws": ["standard_gaussian"],
        "d": 2,
        "m_grid": [32, 64, 128],
        "trials": 3,
        "restarts": 2,
    }
    cfg = config_from_mapping("sw2_rate", mapping, seed=11, out_dir=str(tmp_path / "a"))
    assert run(cfg) == 0
    trial_csv = tmp_path / "a" / "sw2_rate_standard_gaussian.csv"
    lines = _read(trial_csv).decode().splitlines()
    assert lines[0] == "trial,m,sw2_lower_bound,rho,method"
    assert len(lines) == 1 + 3 * 3
    for row in lines[1:]:
        cells = row.split(",")
        assert float(cells[2]) > 0
        assert float(cells[3]) > 0
        assert cells[4] != ""
    fits = _read(tmp_path / "a" / "sw2_rate_fits.csv").decode().splitlines()
    assert fits[0] == "law,aggregate,slope,intercept,r_squared"
    assert {row.split(",")[1] for row in fits[1:]} == {"mean", "median"}
    aggregates = _read(tmp_path / "a" / "sw2_rate_aggregates.csv").decode().splitlines()
    assert aggregates[0] == "law,m,mean_sw2,median_sw2"
    assert len(aggregates) == 1 + 3
    # byte-identical re-run
    cfg2 = config_from_mapping("sw2_rate", mapping, seed=11, out_dir=str(tmp_path / "b"))
    assert run(cfg2) == 0
    assert _read(trial_csv) == _read(tmp_path / "b" / "sw2_rate_standard_gaussian.csv")
    assert _read(tmp_path / "a" / "sw2_rate_fits.csv") == _read(tmp_path / "b" / "sw2_rate_fits.csv")


def test_dkw_scan_campaign_smoke(tmp_path):
    mapping = {
        "laws": ["standard_gaussian"],
        "d": 3,
        "delta": 0.05,
        "m_grid": [200],
        "trials": 2,
        "n_dirs": 4,
        "t_grid": 10,
    }
    cfg = config_from_mapping("dkw_scan", mapping, seed=5, out_dir=str(tmp_path / "a"))
    assert run(cfg) == 0
    lines = _read(tmp_path / "a" / "dkw_scan_m200.csv").decode().splitlines()
    assert lines[0] == "trial,theta_id,u_or_t,F,F_m,bound,ratio,violated"
    assert len(lines) > 1
    for row in lines[1:]:
        cells = row.split(",")
        assert float(cells[5]) > 0  # bound
        assert float(cells[6]) >= 0  # ratio
        assert cells[7] in {"0", "1"}
    summary = _read(tmp_path / "a" / "dkw_scan_summary.csv").decode().splitlines()
    assert summary[0] == "m,trial,probes,excluded,violations,violation_rate,worst_ratio"
    cfg2 = config_from_mapping("dkw_scan", mapping, seed=5, out_dir=str(tmp_path / "b"))
    assert run(cfg2) == 0
    assert _read(tmp_path / "a" / "dkw_scan_m200.csv") == _read(tmp_path / "b" / "dkw_scan_m200.csv")


def test_dm_campaign_smoke(tmp_path):
    mapping = {
        "p": "inf",
        "n": 40,
        "d": 2,
        "trials": 2,
        "n_dirs": 6,
        "mc_samples": 1500,
    }
    cfg = config_from_mapping("dm_oscillation", mapping, seed=17, out_dir=str(tmp_path / "a"))
    assert run(cfg) == 0
    for name in ("dm_gaussian_direct.csv", "dm_two_stage.csv"):
        lines = _read(tmp_path / "a" / name).decode().splitlines()
        assert lines[0] == "trial,norm,n,d,m,d_star,lambda,oscillation"
        assert len(lines) == 1 + 2
        for row in lines[1:]:
            cells = row.split(",")
            assert cells[1] == "linf(n=40)"
            assert cells[2] == "40" and cells[3] == "2"
            assert float(cells[6]) > 0
            assert float(cells[7]) >= 0
    two_stage = _read(tmp_path / "a" / "dm_two_stage.csv").decode().splitlines()
    d_star = float(two_stage[1].split(",")[5])
    assert all(int(r.split(",")[4]) == math.ceil(d_star**4) for r in two_stage[1:])
    decomp = _read(tmp_path / "a" / "dm_decomposition.csv").decode().splitlines()
    assert decomp[0] == (
        "trial,direction_id,s,r,residual_scale,threshold,"
        "head_norm,heavy_norm,bulk_norm,full_norm,recon_gap,heavy_size"
    )
    assert len(decomp) == 1 + 2 * 6
    cfg2 = config_from_mapping("dm_oscillation", mapping, seed=17, out_dir=str(tmp_path / "b"))
    assert run(cfg2) == 0
    assert _read(tmp_path / "a" / "dm_two_stage.csv") == _read(tmp_path / "b" / "dm_two_stage.csv")


def test_hstat_campaign_smoke(tmp_path):
    mapping = {
        "laws": ["standard_gaussian"],
        "d": 3,
        "m_grid": [32, 64],
        "s_values": [1, 2],
        "trials": 2,
        "restarts": 2,
    }
    cfg = config_from_mapping("h_statistics", mapping, seed=23, out_dir=str(tmp_path / "a"))
    assert run(cfg) == 0
    lines = _read(tmp_path / "a" / "hstat.csv").decode().splitlines()
    assert lines[0] == "trial,m,d,s,h_value,rho"
    assert len(lines) == 1 + 2 * 2 * 2
    for row in lines[1:]:
        cells = row.split(",")
        assert float(cells[4]) > 0
        assert float(cells[5]) >= 0
    cfg2 = config_from_mapping("h_statistics", mapping, seed=23, out_dir=str(tmp_path / "b"))
    assert run(cfg2) == 0
    assert _read(tmp_path / "a" / "hstat.csv") == _read(tmp_path / "b" / "hstat.csv")


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------


def test_run_exit_code_io_failure(tmp_path):
    blocker = tmp_path / "not_a_dir"
    blocker.write_text("file in the way", encoding="utf-8")
    cfg = config_from_mapping(
        "lower_bound_witness",
        {"m_grid": [16], "trials": 5},
        seed=1,
        out_dir=str(blocker / "sub"),
    )
    assert run(cfg) == 1


def test_run_exit_code_invariant_failure(tmp_path, monkeypatch):
    import swaudit.harness as harness

    def boom(cfg):
        raise InvariantError("planted failure")

    monkeypatch.setitem(harness._EXPERIMENTS, "lower_bound_witness", boom)
    cfg = config_from_mapping(
        "lower_bound_witness", {"m_grid": [16], "trials": 5}, seed=1, out_dir=str(tmp_path)
    )
    assert run(cfg) == 2
