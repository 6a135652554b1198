#!/usr/bin/env python3
"""Asymptotic and empirical efficiency of the built-in h-functions on shared paths.

Prints sigma_h (asymptotic sd of sqrt(N)(H_hat - H)) over an H grid, then a
Monte Carlo comparison at the chosen n.
"""

import argparse

import numpy as np

from ratiohurst.estimator import VarianceConfig, VarianceTable
from ratiohurst.mc_harness import ExperimentConfig, compare_h
from ratiohurst.stats_core import get_h


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grid", type=float, nargs="+", default=list(np.round(np.arange(0.1, 0.91, 0.1), 2)))
    ap.add_argument("--hurst", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    ap.add_argument("--n", type=int, default=4096)
    ap.add_argument("--replicates", type=int, default=300)
    ap.add_argument("--seed", type=int, default=2016)
    args = ap.parse_args()

    vcfg = VarianceConfig()
    print(f"{'H':>5} {'sigma_h sin':>12} {'sigma_h ir':>12}")
    for hurst in args.grid:
        s = [vcfg.sigma_h2(get_h(h_id), hurst) ** 0.5 for h_id in ("sin", "ir")]
        print(f"{hurst:>5.2f} {s[0]:>12.4f} {s[1]:>12.4f}")

    cfg = ExperimentConfig(args.hurst, [args.n], args.replicates, ["sin", "ir"], master_seed=args.seed)
    rep = compare_h(cfg, VarianceTable(vcfg))
    print(f"\n{'cell':<24} {'emp sd':>8} {'pred sd':>8} {'coverage':>8}")
    for c in rep.cells:
        print(f"{c.key:<24} {c.emp_std:>8.5f} {c.predicted_std:>8.5f} {c.coverage:>8.3f}")
    for c in rep.failed:
        print(f"FAIL {c.name} {c.cell}: {c.value:.4g}")
    return 0 if rep.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
