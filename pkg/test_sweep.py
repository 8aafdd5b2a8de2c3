#!/usr/bin/env python3
"""
Tests for the Monte Carlo harness and the scaling-exponent fits.
"""
import json
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

# Add project root to path
sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

from core.errors import ConfigError, FitError
from core.models import CSV_COLUMNS, RiskReport, SweepConfig, TrialRecord
from mra_model.rng import derive_seed
from mra_sweep import (
    aggregate,
    build_tasks,
    determinism_hash,
    fit_scaling_exponent,
    load_report,
    load_sweep_config,
    records_frame,
    risk_sweep,
    run_trial,
    save_fits,
    worst_cells,
)

EXAMPLE_DIR = Path(__file__).parent / "example"


def small_config(**overrides) -> SweepConfig:
    settings = dict(k_grid=[3], sigma_grid=[0.5], n_grid=[100], methods=["mom-fm"],
                    replicates=4, base_seed=7, progress=False)
    settings.update(overrides)
    return SweepConfig(**settings)


def synthetic_report(axis_values, axis, risk, method="mom-fm", n=None):
    cells = []
    for x in axis_values:
        cell = {"k": 4, "sigma": 1.0, "n": 1000, "method": method}
        cell[axis] = x
        if n is not None:
            cell["n"] = n(cell["sigma"])
        cell["mean_loss"] = risk(cell)
        cell["trimmed_mean_loss"] = cell["mean_loss"]
        cells.append(cell)
    return RiskReport(config=None, cells=cells)


# --- trials ---

def test_noiseless_trial_is_exact():
    record = run_trial("generic", 5, 0.0, 3, "mom-fm", seed=11)
    assert record.loss <= 1e-8
    assert record.flag == ""
    assert record.runtime_ms >= 0


def test_trial_is_deterministic_per_seed():
    first = run_trial("generic", 4, 0.7, 200, "mom-linf", seed=3, replicate=2)
    second = run_trial("generic", 4, 0.7, 200, "mom-linf", seed=3, replicate=2)
    assert first.loss == second.loss
    assert (first.k, first.sigma, first.n, first.method, first.replicate, first.seed, first.flag) == \
        (second.k, second.sigma, second.n, second.method, second.replicate, second.seed, second.flag)
    other = run_trial("generic", 4, 0.7, 200, "mom-linf", seed=4, replicate=2)
    assert other.loss != first.loss


def test_hypercube_trial():
    record = run_trial("hypercube", 4, 1.0, 200, "mom-fm", seed=5)
    assert math.isfinite(record.loss) and record.loss >= 0


def test_hypercube_example_config():
    cfg = load_sweep_config(EXAMPLE_DIR / "hypercube.json")
    assert cfg.family == "hypercube"
    assert len(build_tasks(cfg)) == 2 * 3 * 1 * 3 * 20
    report = risk_sweep(replace(cfg, k_grid=[4], sigma_grid=[1.0], methods=["mom-fm"], replicates=2, progress=False))
    assert [c["count"] for c in report.cells] == [2]


def test_oracle_trial_uses_the_truth():
    record = run_trial("generic", 4, 0.0, 3, "mom-oracle", seed=6)
    assert record.loss <= 1e-8


def test_failed_trial_is_flagged():
    # the likelihood needs sigma > 0
    record = run_trial("generic", 3, 0.0, 5, "mle", seed=1)
    assert math.isnan(record.loss)
    assert record.flag == "error:InvalidSampleError"
    assert record.failed


# --- seeding and tasks ---

def test_task_seeds_are_distinct():
    cfg = small_config(k_grid=[2, 3, 4], sigma_grid=[0.5, 1.0], n_grid=[10, 20],
                       methods=["mom-fm", "mom-linf"], replicates=5)
    tasks = build_tasks(cfg)
    assert len(tasks) == 3 * 2 * 2 * 2 * 5
    assert len({t.seed for t in tasks}) == len(tasks)
    assert tasks[0].seed == derive_seed(7, 2, 0, 0, "mom-fm", 0)
    assert all(t.signal_seed is None for t in tasks)


def test_fixed_signal_tasks_share_a_signal_per_k():
    tasks = build_tasks(small_config(k_grid=[3, 4], fixed_signal=True))
    by_k = {}
    for t in tasks:
        by_k.setdefault(t.k, set()).add(t.signal_seed)
    assert all(len(seeds) == 1 for seeds in by_k.values())
    assert by_k[3] != by_k[4]


def test_n_scaling_ties_n_to_sigma():
    cfg = small_config(sigma_grid=[2.0, 4.0], n_scaling={"coefficient": 200, "sigma_power": 6})
    assert sorted({(t.sigma, t.n) for t in build_tasks(cfg)}) == [(2.0, 12800), (4.0, 819200)]


# --- config ---

def test_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "sweep.yaml"
    path.write_text("k_grid: [3]\nreplicas: 4\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_sweep_config(path)


@pytest.mark.parametrize("overrides", [
    {"k_grid": []},
    {"replicates": 0},
    {"methods": ["em"]},
    {"c_lo": 3.0},
    {"k_grid": [1]},
])
def test_config_validation(overrides):
    with pytest.raises(ConfigError):
        small_config(**overrides)


def test_config_environment_override(tmp_path, monkeypatch):
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps({"k_grid": [3], "replicates": 3}), encoding="utf-8")
    monkeypatch.setenv("MRA_REPLICATES", "7")
    cfg = load_sweep_config(path)
    assert cfg.replicates == 7
    assert cfg.k_grid == [3]
    assert cfg.c_lo == 0.5


# --- sweeps and aggregation ---

def test_single_cell_report_matches_trial(tmp_path):
    cfg = small_config(replicates=1)
    report = risk_sweep(cfg, tmp_path)
    task = build_tasks(cfg)[0]
    record = run_trial("generic", 3, 0.5, 100, "mom-fm", seed=task.seed)
    assert len(report.records) == 1
    assert report.records[0].loss == record.loss
    assert report.cells[0]["mean_loss"] == record.loss
    assert report.cells[0]["count"] == 1


def test_aggregate_mean_matches_records():
    report = risk_sweep(small_config(replicates=6, sigma_grid=[0.5, 1.0]))
    for cell in report.cells:
        losses = [r.loss for r in report.records if r.sigma == cell["sigma"]]
        assert cell["mean_loss"] == pytest.approx(np.mean(losses), abs=1e-12)
        assert cell["median_loss"] == pytest.approx(np.median(losses), abs=1e-12)
        assert cell["worst_loss"] == max(losses)
        assert cell["normalized_risk"] == pytest.approx(cell["mean_loss"] / cell["reference_rate"])


def test_aggregate_skips_failed_records():
    records = [
        TrialRecord(3, 1.0, 10, "mle", 0, 1, 0.5, 1.0),
        TrialRecord(3, 1.0, 10, "mle", 1, 2, 1.5, 1.0),
        TrialRecord(3, 1.0, 10, "mle", 2, 3, math.nan, 1.0, "error:QuadratureError"),
    ]
    cell, = aggregate(records)
    assert cell["count"] == 2 and cell["failed"] == 1
    assert cell["mean_loss"] == 1.0
    assert "reference_rate" not in cell


def test_trimmed_mean_drops_the_top_tail():
    records = [TrialRecord(3, 1.0, 10, "mom-fm", i, i, float(i), 1.0) for i in range(100)]
    cell, = aggregate(records, trim_top=0.02)
    assert cell["trimmed_mean_loss"] == pytest.approx(np.mean(np.arange(98)))


def test_report_files(tmp_path):
    report = risk_sweep(small_config(), tmp_path)
    with open(tmp_path / "results.csv", encoding="utf-8") as f:
        assert f.readline().strip().split(",") == CSV_COLUMNS
    payload = json.loads((tmp_path / "report.json").read_text(encoding="utf-8"))
    assert payload["determinism_hash"] == determinism_hash(records_frame(report.records))
    assert payload["config"]["methods"] == ["mom-fm"]

    loaded = load_report(tmp_path)
    assert [r.loss for r in loaded.records] == [r.loss for r in report.records]
    assert [r.seed for r in loaded.records] == [r.seed for r in report.records]
    assert loaded.cells == report.cells
    assert load_report(tmp_path / "results.csv").records[0].loss == report.records[0].loss
    assert payload["worst_cells"] == report.worst_cells == loaded.worst_cells
    assert payload["worst_cells"]["mom-fm"]["mean_loss"] == max(c["mean_loss"] for c in report.cells)


def test_worst_cells_summary():
    cells = [
        {"k": 4, "sigma": 1.0, "n": 100, "method": "mom-fm", "mean_loss": 0.2, "worst_loss": 0.9,
         "normalized_risk": 2.0},
        {"k": 4, "sigma": 2.0, "n": 100, "method": "mom-fm", "mean_loss": 0.5, "worst_loss": 0.7,
         "normalized_risk": 1.5},
        {"k": 4, "sigma": 2.0, "n": 100, "method": "mle", "mean_loss": 0.1, "worst_loss": 0.3},
        {"k": 4, "sigma": 3.0, "n": 100, "method": "mle", "count": 0, "failed": 4},
    ]
    summary = worst_cells(cells)
    assert summary["mom-fm"] == {"k": 4, "sigma": 2.0, "n": 100, "mean_loss": 0.5, "worst_loss": 0.9,
                                 "max_normalized_risk": 2.0}
    assert summary["mle"]["sigma"] == 2.0 and "max_normalized_risk" not in summary["mle"]
    assert worst_cells([]) == {}


def test_fits_are_merged_into_the_report(tmp_path):
    risk_sweep(small_config(n_grid=[100, 200, 400]), tmp_path)
    report = load_report(tmp_path)
    fit = fit_scaling_exponent(report, "n")
    assert save_fits(report, tmp_path) == tmp_path / "report.json"
    reloaded = load_report(tmp_path / "report.json")
    assert reloaded.fits["mom-fm:n"] == fit
    assert save_fits(report, tmp_path / "elsewhere" / "results.csv") is None


def test_load_report_missing_results(tmp_path):
    with pytest.raises(ConfigError):
        load_report(tmp_path)


def test_determinism_across_worker_counts():
    cfg = small_config(methods=["mom-fm", "mom-linf"], sigma_grid=[0.5, 1.5], replicates=3)
    serial = risk_sweep(cfg)
    cfg.workers = 2
    parallel = risk_sweep(cfg)
    assert determinism_hash(records_frame(serial.records)) == determinism_hash(records_frame(parallel.records))


def test_determinism_example_config(tmp_path):
    cfg = load_sweep_config(EXAMPLE_DIR / "determinism.yaml")
    cfg.progress = False
    hashes = []
    for run in ("a", "b"):
        risk_sweep(cfg, tmp_path / run)
        hashes.append(json.loads((tmp_path / run / "report.json").read_text(encoding="utf-8"))["determinism_hash"])
    assert hashes[0] == hashes[1]


@pytest.mark.slow
def test_doubling_replicates_halves_the_variance_of_the_mean():
    settings = dict(k_grid=[4], sigma_grid=[0.3], n_grid=[500], c_lo=1.0, c_hi=1.0)
    small = risk_sweep(small_config(replicates=200, **settings)).cells[0]["stderr"]
    large = risk_sweep(small_config(replicates=400, base_seed=8, **settings)).cells[0]["stderr"]
    assert 2 / 1.5 <= small ** 2 / large ** 2 <= 2 * 1.5


# --- fits ---

def test_fit_recovers_sigma_power():
    report = synthetic_report([1.0, 2.0, 3.0, 5.0], "sigma", lambda c: 0.3 * c["sigma"] ** 6)
    fit = fit_scaling_exponent(report, "sigma")
    assert fit["slope"] == pytest.approx(6.0, abs=1e-9)
    assert fit["intercept"] == pytest.approx(math.log(0.3), abs=1e-9)
    assert fit["points"] == 4
    assert report.fits["mom-fm:sigma"] is fit


def test_fit_recovers_inverse_n():
    report = synthetic_report([1000, 2000, 4000], "n", lambda c: 5.0 / c["n"])
    assert fit_scaling_exponent(report, "n")["slope"] == pytest.approx(-1.0, abs=1e-9)


def test_fit_normalizes_tied_sample_sizes():
    report = synthetic_report([2.0, 2.83, 4.0], "sigma", lambda c: 3.0 * c["sigma"] ** 6 / c["n"],
                              n=lambda sigma: int(round(200 * sigma ** 6)))
    with pytest.raises(FitError):
        fit_scaling_exponent(report, "sigma")
    assert fit_scaling_exponent(report, "sigma", normalize_n=True)["slope"] == pytest.approx(6.0, abs=1e-9)


def test_fit_uses_trimmed_means():
    report = synthetic_report([1.0, 2.0, 4.0], "sigma", lambda c: c["sigma"] ** 2)
    for cell in report.cells:
        cell["trimmed_mean_loss"] = cell["sigma"] ** 3
    assert fit_scaling_exponent(report, "sigma", trimmed=True)["slope"] == pytest.approx(3.0, abs=1e-9)


def test_fit_errors():
    with pytest.raises(FitError):
        fit_scaling_exponent(synthetic_report([1.0, 2.0], "sigma", lambda c: c["sigma"]), "sigma")
    with pytest.raises(FitError):
        fit_scaling_exponent(synthetic_report([1.0, 2.0, 3.0], "sigma", lambda c: 0.0), "sigma")
    with pytest.raises(FitError):
        fit_scaling_exponent(synthetic_report([1.0, 2.0, 3.0], "sigma", lambda c: 1.0), "width")

    mixed = synthetic_report([1.0, 2.0, 3.0], "sigma", lambda c: c["sigma"])
    mixed.cells += synthetic_report([1.0, 2.0, 3.0], "sigma", lambda c: c["sigma"], method="mle").cells
    with pytest.raises(FitError):
        fit_scaling_exponent(mixed, "sigma")
    assert fit_scaling_exponent(mixed, "sigma", method="mle")["slope"] == pytest.approx(1.0)

    unfixed = synthetic_report([1.0, 2.0, 3.0], "sigma", lambda c: c["sigma"])
    unfixed.cells[0]["k"] = 8
    with pytest.raises(FitError):
        fit_scaling_exponent(unfixed, "sigma")


# --- desk-scale scaling experiments ---

def _example_report(name, tmp_path):
    cfg = load_sweep_config(EXAMPLE_DIR / name)
    cfg.progress = False
    cfg.workers = max(1, min(4, os.cpu_count() or 1))
    return risk_sweep(cfg, tmp_path)


@pytest.mark.acceptance
def test_high_noise_sigma_six_scaling(tmp_path):
    report = _example_report("high_noise_sigma6.yaml", tmp_path)
    fit = fit_scaling_exponent(report, "sigma", normalize_n=True)
    assert 5.3 <= fit["slope"] <= 6.7
    scaled = [c["mean_loss"] * c["n"] / c["sigma"] ** 6 for c in report.cells]
    assert max(scaled) / min(scaled) < 2


@pytest.mark.acceptance
def test_inverse_n_consistency(tmp_path):
    report = _example_report("inverse_n.yaml", tmp_path)
    assert -1.25 <= fit_scaling_exponent(report, "n")["slope"] <= -0.75


@pytest.mark.acceptance
def test_low_noise_mle_rate(tmp_path):
    report = _example_report("low_noise_mle.yaml", tmp_path)
    assert -1.25 <= fit_scaling_exponent(report, "n")["slope"] <= -0.75
    scaled = [c["mean_loss"] * c["n"] / (c["k"] * c["sigma"] ** 2) for c in report.cells]
    assert max(scaled) / min(scaled) < 2


if __name__ == "__main__":
    print("Testing the risk sweep harness")
    print("=" * 60)
    sys.exit(pytest.main([__file__, "-m", "not slow and not acceptance", "-q"]))
