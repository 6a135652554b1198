import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ratiohurst.cli import main
from ratiohurst.stats_core import read_trajectory

FAST = ["--mc-samples", "100000", "--k-max", "60"]


def run(*args, env=None):
    return subprocess.run([sys.executable, "-m", "ratiohurst", *map(str, args)],
                          capture_output=True, text=True, env=env)


@pytest.fixture(scope="module")
def path_h05(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim") / "p.csv"
    assert main(["simulate", "--hurst", "0.5", "--n", "8192", "--seed", "11", "-o", str(out)]) == 0
    return out


def test_simulate_writes_csv_and_sidecar(tmp_path):
    out = tmp_path / "a.csv"
    assert main(["simulate", "--hurst", "0.7", "--n", "4096", "--seed", "42", "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "t,value" and len(lines) == 4098
    assert json.loads(out.with_suffix(".json").read_text()) == {
        "hurst": 0.7, "n": 4096, "seed": 42, "method": "circulant"}
    again = tmp_path / "b.csv"
    main(["simulate", "--hurst", "0.7", "--n", "4096", "--seed", "42", "-o", str(again)])
    assert again.read_bytes() == out.read_bytes()


def test_hurst_out_of_range_is_usage_error(tmp_path):
    r = run("simulate", "--hurst", "1.2", "--n", "64", "-o", tmp_path / "x.csv")
    assert r.returncode == 2
    assert "open interval (0, 1)" in r.stderr
    assert not (tmp_path / "x.csv").exists()


def test_env_seed(tmp_path):

    env = {**os.environ, "RATIOHURST_SEED": "9"}
    run("simulate", "--hurst", "0.4", "--n", "64", "-o", tmp_path / "env.csv", env=env)
    run("simulate", "--hurst", "0.4", "--n", "64", "--seed", "9", "-o", tmp_path / "flag.csv")
    assert (tmp_path / "env.csv").read_bytes() == (tmp_path / "flag.csv").read_bytes()


def test_estimate_bm_path(path_h05, capsys):
    assert main(["estimate", str(path_h05), *FAST]) == 0
    res = json.loads(capsys.readouterr().out)
    assert 0.40 < res["h_hat"] < 0.60
    assert res["ci"][0] < res["h_hat"] < res["ci"][1]
    assert res["n"] == 8192 and res["n_ratios"] == 8190


def test_sin_and_ir_agree(path_h05, capsys):
    out = {}
    for h in ("sin", "ir"):
        main(["estimate", str(path_h05), "--h", h, "--alpha", "0.01", *FAST])
        out[h] = json.loads(capsys.readouterr().out)
    for a, b in (("sin", "ir"), ("ir", "sin")):
        lo, hi = out[a]["ci"]
        assert lo <= out[b]["h_hat"] <= hi


def test_estimate_headerless_single_column(path_h05, tmp_path, capsys):
    values = read_trajectory(path_h05)
    plain = tmp_path / "plain.csv"
    np.savetxt(plain, values, fmt="%.17g")
    main(["estimate", str(path_h05), *FAST])
    a = json.loads(capsys.readouterr().out)
    main(["estimate", str(plain), *FAST])
    b = json.loads(capsys.readouterr().out)
    assert a == b


def test_constant_trajectory_fails(tmp_path):
    flat = tmp_path / "flat.csv"
    flat.write_text("\n".join(["1.5"] * 100) + "\n")
    r = run("estimate", flat)
    assert r.returncode == 1
    assert "error" in r.stderr and r.stdout == ""


def test_missing_file_fails(tmp_path):
    assert run("estimate", tmp_path / "nope.csv").returncode == 1


def test_bad_column_fails(path_h05):
    assert run("estimate", path_h05, "--column", "price").returncode == 1


def test_low_mc_samples_is_usage_error():
    assert run("variance", "--hurst", "0.5", "--mc-samples", "10").returncode == 2


@pytest.mark.parametrize("hurst", [0.2, 0.5, 0.8])
def test_variance_deterministic(hurst, capsys):
    args = ["variance", "--hurst", str(hurst), "--h", "ir"]
    main(args)
    a = json.loads(capsys.readouterr().out)
    main(args)
    b = json.loads(capsys.readouterr().out)
    assert a == b
    assert a["sigma_h2"] > 0 and a["mc_samples"] == 100_000 and a["k_max"] == 200


def test_variance_config_file(tmp_path, capsys):
    cfg = tmp_path / "v.json"
    cfg.write_text(json.dumps({"k_max": 30, "mc_samples": 100_000, "seed": 4}))
    main(["variance", "--hurst", "0.5", "--variance-config", str(cfg), "--k-max", "25"])
    out = json.loads(capsys.readouterr().out)
    assert out["k_max"] == 25 and out["seed"] == 4
    cfg.write_text(json.dumps({"kmax": 30}))
    assert run("variance", "--hurst", "0.5", "--variance-config", cfg).returncode == 2


def _tiny_config(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({
        "variance_config": {"k_max": 60, "mc_samples": 20_000},
        "consistency": {"hurst_grid": [0.5], "n_grid": [512, 2048], "replicates": 60},
        "clt": {"hurst_grid": [0.5], "n_grid": [2048], "replicates": 300, "h_ids": ["sin"]},
    }))
    return cfg


def test_validate_config_and_negative_control(tmp_path):
    cfg = _tiny_config(tmp_path)
    ok = run("validate", "--config", cfg, "--out-dir", tmp_path / "ok")
    assert ok.returncode == 0, ok.stdout + ok.stderr
    assert (tmp_path / "ok" / "summary.json").exists()
    assert (tmp_path / "ok" / "clt_cells.csv").exists()
    bad = run("validate", "--config", cfg, "--out-dir", tmp_path / "bad", "--inject-rho-error", "0.05")
    assert bad.returncode == 1
    assert "FAIL" in bad.stdout
    assert json.loads((tmp_path / "bad" / "summary.json").read_text())["passed"] is False


def test_validate_bad_config_is_usage_error(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text(json.dumps({"clt": {"hurst_grid": [0.5], "n_grid": [512], "replicates": 10}}))
    assert run("validate", "--config", cfg).returncode == 2
    cfg.write_text("{not json")
    assert run("validate", "--config", cfg).returncode == 2


@pytest.mark.slow
def test_validate_quick(tmp_path):
    r = run("validate", "--quick", "--out-dir", tmp_path)
    assert r.returncode == 0, r.stdout + r.stderr
    summary = json.loads((tmp_path / "summary.json").read_text())
    assert summary["passed"] is True
    assert {p.name for p in tmp_path.iterdir()} == {
        "summary.json", "consistency_cells.csv", "clt_cells.csv", "compare_h_cells.csv"}
