import csv
import json

import pytest

from ratiohurst.estimator import VarianceConfig, VarianceTable
from ratiohurst.mc_harness import (
    ExperimentConfig,
    ValidationConfig,
    compare_h,
    coverage_band,
    run_clt,
    run_consistency,
    run_validation,
    simulate_cells,
    write_reports,
)

CHEAP = VarianceConfig(k_max=60, mc_samples=20_000)


@pytest.fixture(scope="module")
def cheap_table():
    return VarianceTable(CHEAP)


def small(**kw):
    base = dict(hurst_grid=[0.5], n_grid=[256], replicates=50, variance=CHEAP)
    base.update(kw)
    return ExperimentConfig(**base)


@pytest.mark.parametrize("kw", [
    dict(replicates=49),
    dict(hurst_grid=[1.0]),
    dict(n_grid=[8]),
    dict(alpha=1.5),
    dict(h_ids=["cos"]),
])
def test_config_rejects_bad_values(kw):
    with pytest.raises((ValueError, KeyError)):
        small(**kw)


def test_cells_are_deterministic(cheap_table):
    a = simulate_cells(small(), cheap_table)
    b = simulate_cells(small(), cheap_table)
    assert a == b
    c = simulate_cells(small(master_seed=7), cheap_table)
    assert c[0].bias != a[0].bias


def test_h_functions_share_paths(cheap_table):
    both = simulate_cells(small(), cheap_table)
    only_ir = simulate_cells(small(h_ids=["ir"]), cheap_table)
    assert [c for c in both if c.h_id == "ir"] == only_ir


def test_coverage_band():
    assert coverage_band(0.05, 500) == pytest.approx((0.90, 0.98))
    lo, hi = coverage_band(0.05, 50)
    assert lo < 0.90 and hi > 0.98


def test_consistency_report(cheap_table):
    rep = run_consistency(small(n_grid=[256, 1024], replicates=60), cheap_table)
    names = {c.name for c in rep.checks}
    assert names == {"rmse_ratio", "abs_bias"}
    for h_id in ("sin", "ir"):
        assert rep.cell(0.5, 1024, h_id).rmse < rep.cell(0.5, 256, h_id).rmse


def test_clt_needs_replicates():
    with pytest.raises(ValueError):
        run_clt(small(replicates=299))


def test_compare_needs_two_h():
    with pytest.raises(ValueError):
        compare_h(small(h_ids=["sin"]))


def test_injected_rho_error_breaks_coverage(cheap_table):
    good = run_clt(small(n_grid=[2048], replicates=300, h_ids=["sin"]), cheap_table)
    bad = run_clt(small(n_grid=[2048], replicates=300, h_ids=["sin"], rho_shift=0.05), cheap_table)
    assert good.cells[0].coverage > 0.88
    failed = {c.name for c in bad.failed}
    assert "coverage" in failed
    assert abs(bad.cells[0].bias) > 5 * abs(good.cells[0].bias)


def test_reports_round_trip(tmp_path, cheap_table):
    vcfg = ValidationConfig(consistency=small(n_grid=[128, 512]), clt=None, variance=None, compare=small())
    reports = run_validation(vcfg)
    summary_path = write_reports(reports, tmp_path)
    summary = json.loads(summary_path.read_text())
    assert set(summary) == {"passed", "failed_checks", "reports"}
    assert [r["kind"] for r in summary["reports"]] == ["consistency", "compare_h"]
    for rep in reports:
        with open(tmp_path / f"{rep.kind}_cells.csv") as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == len(rep.cells)
        assert rows[0]["kind"] == rep.kind
        assert float(rows[0]["rmse"]) == rep.cells[0].rmse
    assert summary["passed"] == all(r.passed for r in reports)


def test_from_dict_shares_top_level_keys():
    vcfg = ValidationConfig.from_dict({
        "alpha": 0.1,
        "master_seed": 3,
        "variance_config": {"k_max": 40, "mc_samples": 10_000},
        "clt": {"hurst_grid": [0.4], "n_grid": [512], "replicates": 300},
    })
    assert vcfg.consistency is None and vcfg.compare is None
    assert vcfg.clt.alpha == 0.1 and vcfg.clt.master_seed == 3
    assert vcfg.clt.variance == VarianceConfig(k_max=40, mc_samples=10_000)
    with pytest.raises(TypeError):
        ValidationConfig.from_dict({"clt": {"hurst_grid": [0.4], "n_grid": [512], "replicates": 300, "bogus": 1}})


def test_profiles():
    quick = ValidationConfig.profile("quick")
    full = ValidationConfig.profile("full")
    assert quick.variance is None and full.variance.replicates == 2000
    assert full.clt.replicates == 500
    with pytest.raises(ValueError):
        ValidationConfig.profile("medium")
