#!/usr/bin/env python3
"""Coverage and normality of standardized residuals over an (H, n) grid.

    python3 scripts/run_clt_experiment.py --hurst 0.3 0.5 0.7 --n 4096 --replicates 500
"""

import argparse
from pathlib import Path

from ratiohurst.estimator import VarianceConfig, VarianceTable
from ratiohurst.mc_harness import ExperimentConfig, run_clt


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--hurst", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    ap.add_argument("--n", type=int, nargs="+", default=[4096])
    ap.add_argument("--replicates", type=int, default=500)
    ap.add_argument("--h", nargs="+", default=["sin", "ir"])
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=2016)
    ap.add_argument("--csv", type=Path, default=None, help="write the per-cell table here")
    args = ap.parse_args()

    cfg = ExperimentConfig(args.hurst, args.n, args.replicates, args.h, args.alpha, args.seed)
    rep = run_clt(cfg, VarianceTable(VarianceConfig()), variance_check_from=1000)
    print(f"{'cell':<24} {'bias':>9} {'rmse':>8} {'cover':>6} {'KS p':>6} {'skew':>6} {'kurt':>6} {'sd/pred':>7}")
    for c in rep.cells:
        print(f"{c.key:<24} {c.bias:>9.5f} {c.rmse:>8.5f} {c.coverage:>6.3f} {c.ks_pvalue:>6.3f} "
              f"{c.skewness:>6.2f} {c.excess_kurtosis:>6.2f} {c.emp_std / c.predicted_std:>7.3f}")
    for c in rep.failed:
        print(f"FAIL {c.name} {c.cell}: {c.value:.4g} not in [{c.low:.4g}, {c.high:.4g}]")
    if args.csv:
        rep.write_csv(args.csv)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    raise SystemExit(main())
