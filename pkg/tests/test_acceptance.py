"""Exit criteria. Each test records one PASS/FAIL line, shown in the terminal summary."""

import json
import math

import numpy as np
import pytest
from scipy import stats

from ratiohurst.cli import main
from ratiohurst.estimator import estimate, invert_mean_map, mean_map, ratio_scale, rho, rho_k
from ratiohurst.fbm_sim import derive_seed, generate
from ratiohurst.mc_harness import ExperimentConfig, run_clt, run_consistency, simulate_cells
from ratiohurst.stats_core import get_h

from oracles import fourier_cauchy_sin, gaussian_ratio_mean, mp_rho_k

GRID_99 = np.linspace(0.01, 0.99, 99)


def test_1_rho_correctness(record):
    err_half = abs(rho(0.5) + 0.5)
    err_zero = float(np.max(np.abs(rho_k(0.5, np.arange(2, 101)))))
    err_brute = 0.0
    for h in np.round(np.arange(0.1, 0.95, 0.1), 1):
        ks = np.arange(0, 51)
        got = rho_k(h, ks.astype(float))
        want = np.array([float(mp_rho_k(h, int(k))) for k in ks])
        err_brute = max(err_brute, float(np.max(np.abs(got - want))))
    ok = max(err_half, err_zero, err_brute) <= 1e-12
    record("1 rho correctness", ok,
           f"|rho(0.5)+0.5|={err_half:.1e}, max|rho_k(0.5,2..100)|={err_zero:.1e}, "
           f"max brute-force gap={err_brute:.1e} (tol 1e-12)")
    assert ok


def test_2_mean_map_fidelity(record):
    m_sin = mean_map("sin")
    gap_sin = max(abs(m_sin(h) - fourier_cauchy_sin(rho(h), ratio_scale(rho(h)))) for h in GRID_99)
    m_ir, ir = mean_map("ir"), get_h("ir")
    z_max = 0.0
    for i, h in enumerate((0.3, 0.5, 0.7)):
        mc, se = gaussian_ratio_mean(ir.func, rho(h), 10_000_000, derive_seed(77, i))
        z_max = max(z_max, abs(m_ir(h) - mc) / se)
    ok = gap_sin <= 1e-9 and z_max <= 4.0
    record("2 mean-map fidelity", ok,
           f"sin vs quadrature max gap={gap_sin:.1e} (tol 1e-9); ir vs 1e7 MC max |z|={z_max:.2f} (tol 4)")
    assert ok


def test_3_inversion_round_trip(record):
    worst = {}
    for h_id in ("sin", "ir"):
        mm = mean_map(h_id)
        worst[h_id] = max(abs(invert_mean_map(mm, mm(h))[0] - h) for h in GRID_99)
    ok = max(worst.values()) <= 1e-9
    record("3 inversion round trip", ok,
           ", ".join(f"{k} max err={v:.1e}" for k, v in worst.items()) + " (tol 1e-9)")
    assert ok


def test_4_simulator_exactness(record):
    n, m = 256, 2000
    details, ok = [], True
    for hurst in (0.3, 0.7):
        terminal, mid = {}, {}
        # separate seed streams per method: the two-sample test needs independent samples
        for j, method in enumerate(("cholesky", "circulant")):
            paths = [generate(hurst, n, derive_seed(404, int(hurst * 10), j, r), method).values for r in range(m)]
            terminal[method] = np.array([p[-1] for p in paths])
            mid[method] = np.array([p[n // 2 + 1] - 2 * p[n // 2] + p[n // 2 - 1] for p in paths])
        p = stats.ks_2samp(terminal["cholesky"], terminal["circulant"]).pvalue
        target = n ** (-2 * hurst) * (4 - 4**hurst)
        se = target * math.sqrt(2 / (m - 1))
        z = max(abs(np.var(d, ddof=1) - target) / se for d in mid.values())
        ok &= p > 0.01 and z <= 3
        details.append(f"H={hurst}: KS p={p:.3f}, Var(d) max |z|={z:.2f}")
    record("4 simulator exactness", ok, "; ".join(details) + " (p > 0.01, |z| <= 3)")
    assert ok


def test_5_consistency_rate(record, table):
    cfg = ExperimentConfig([0.5], [2**9, 2**11, 2**13], 200, h_ids=["sin"])
    rep = run_consistency(cfg, table)
    rmse = [rep.cell(0.5, n, "sin").rmse for n in cfg.n_grid]
    ratios = [b / a for a, b in zip(rmse, rmse[1:])]
    ok = all(0.35 <= r <= 0.72 for r in ratios)
    record("5 consistency rate", ok,
           "RMSE " + " -> ".join(f"{r:.4f}" for r in rmse)
           + ", ratios " + ", ".join(f"{r:.3f}" for r in ratios) + " (band [0.35, 0.72])")
    assert ok


def test_6_clt_and_coverage(record, table):
    cfg = ExperimentConfig([0.3, 0.5, 0.7], [2**12], 500)
    rep = run_clt(cfg, table)
    cov = [c.coverage for c in rep.cells]
    pv = [c.ks_pvalue for c in rep.cells]
    ok = all(0.90 <= c <= 0.98 for c in cov) and all(p > 0.01 for p in pv)
    record("6 CLT and coverage", ok,
           f"coverage in [{min(cov):.3f}, {max(cov):.3f}] (band [0.90, 0.98]); "
           f"min KS p={min(pv):.3f} (> 0.01) over {len(rep.cells)} cells")
    assert ok


def test_7_long_run_variance(record, table):
    cfg = ExperimentConfig([0.5], [2**12], 2000)
    cells = simulate_cells(cfg, table)
    gaps = {c.h_id: c.sigma_f2_gap for c in cells}
    ok = all(g < 0.15 for g in gaps.values())
    record("7 long-run variance", ok,
           ", ".join(f"{c.h_id}: sigma_f2={c.sigma_f2:.4f} vs empirical {c.hbar_var_scaled:.4f} "
                     f"(gap {c.sigma_f2_gap:.1%})" for c in cells) + " (tol 15%)")
    assert ok


def _lattice_path(hurst, n, seed):
    # dyadic lattice fine enough for H estimation, coarse enough that the transforms below are exact
    x = generate(hurst, n, seed).values
    return np.round(x * 2.0**28) / 2.0**28


def test_8_affine_invariance(record):
    n = 2048
    idx = np.arange(n + 1, dtype=float)
    transforms = [(a, b, c) for a in (-3.0, 1e6) for b in (0.0, 17.25) for c in (0.0, -0.375)]
    mismatches = total = 0
    for seed in range(10):
        x = _lattice_path(0.3 + 0.05 * seed, n, derive_seed(808, seed))
        for h_id in ("sin", "ir"):
            base = estimate(x, h_id).h_hat
            for a, b, c in transforms:
                total += 1
                mismatches += estimate(a * x + b + c * idx, h_id).h_hat != base
    ok = mismatches == 0
    record("8 affine invariance", ok,
           f"{mismatches} bitwise mismatches over {total} transformed estimates (2^-28 lattice paths)")
    assert ok


def test_9_cli_pipeline(record, tmp_path, capsys):
    misses = []
    for seed in range(1, 51):
        out = tmp_path / f"p{seed}.csv"
        assert main(["simulate", "--hurst", "0.7", "--n", "8192", "--seed", str(seed), "-o", str(out)]) == 0
        assert main(["estimate", str(out), "--alpha", "1e-4"]) == 0
        res = json.loads(capsys.readouterr().out)
        if not res["ci"][0] <= 0.7 <= res["ci"][1]:
            misses.append(seed)
    ok = not misses
    record("9 CLI pipeline", ok, f"0.7 outside the 99.99% CI for seeds {misses}" if misses
           else "0.7 inside the 99.99% CI for all 50 seeds")
    assert ok
