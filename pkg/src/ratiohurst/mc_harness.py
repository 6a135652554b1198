"""Monte Carlo experiments for consistency, asymptotic normality and CI coverage.

Every cell (H, n, h) reuses one simulated path per replicate for all h's. The
replicate seed is ``derive_seed(master_seed, i_hurst, i_n, r)``, so a report is
a pure function of its config. Plug-in standard errors come from a shared
``VarianceTable``.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import stats

from .estimator import VarianceConfig, VarianceTable, estimate
from .fbm_sim import derive_seed, generate
from .stats_core import get_h

__all__ = [
    "ExperimentConfig",
    "CellResult",
    "Check",
    "ExperimentReport",
    "simulate_cells",
    "run_consistency",
    "run_clt",
    "compare_h",
    "ValidationConfig",
    "run_validation",
]


@dataclass
class ExperimentConfig:
    hurst_grid: list[float]
    n_grid: list[int]
    replicates: int
    h_ids: list[str] = field(default_factory=lambda: ["sin", "ir"])
    alpha: float = 0.05
    master_seed: int = 2016
    method: str = "circulant"
    variance: VarianceConfig = field(default_factory=VarianceConfig)
    # negative-control hook: the estimator inverts a mean map built on rho + rho_shift
    rho_shift: float = 0.0

    def __post_init__(self):
        if self.replicates < 50:
            raise ValueError(f"replicates must be >= 50, got {self.replicates}")
        bad = [h for h in self.hurst_grid if not 0.01 < h < 0.99]
        if bad:
            raise ValueError(f"hurst values must lie in (0.01, 0.99), got {bad}")
        if any(int(n) != n or n < 16 for n in self.n_grid):
            raise ValueError(f"n values must be integers >= 16, got {self.n_grid}")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        for h_id in self.h_ids:
            get_h(h_id)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["variance"] = asdict(self.variance)
        return d


@dataclass
class CellResult:
    hurst: float
    n: int
    h_id: str
    replicates: int
    bias: float
    rmse: float
    coverage: float
    mean_std_error: float
    emp_std: float
    sigma_h: float
    predicted_std: float
    skewness: float
    excess_kurtosis: float
    ks_stat: float
    ks_pvalue: float
    clamp_rate: float
    sigma_f2: float
    hbar_var_scaled: float
    sigma_f2_gap: float

    @property
    def key(self) -> str:
        return f"H={self.hurst:g},n={self.n},h={self.h_id}"


@dataclass
class Check:
    name: str
    cell: str
    value: float
    low: float
    high: float

    @property
    def passed(self) -> bool:
        return bool(self.low <= self.value <= self.high)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


@dataclass
class ExperimentReport:
    kind: str
    config: dict
    cells: list[CellResult]
    checks: list[Check] = field(default_factory=list)
    flags: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def failed(self) -> list[Check]:
        return [c for c in self.checks if not c.passed]

    def cell(self, hurst: float, n: int, h_id: str) -> CellResult:
        for c in self.cells:
            if c.hurst == hurst and c.n == n and c.h_id == h_id:
                return c
        raise KeyError((hurst, n, h_id))

    def write_csv(self, path: str | Path) -> None:
        names = [f.name for f in fields(CellResult)]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["kind", *names])
            for c in self.cells:
                writer.writerow([self.kind, *(_fmt(getattr(c, k)) for k in names)])

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "passed": self.passed,
            "config": self.config,
            "checks": [c.to_dict() for c in self.checks],
            "flags": self.flags,
            "cells": [asdict(c) for c in self.cells],
        }


def _fmt(v):
    return f"{v:.17g}" if isinstance(v, float) else v


def simulate_cells(cfg: ExperimentConfig, table: Optional[VarianceTable] = None) -> list[CellResult]:
    table = table or VarianceTable(cfg.variance)
    hs = [get_h(h_id) for h_id in cfg.h_ids]
    out = []
    for i_h, hurst in enumerate(cfg.hurst_grid):
        for i_n, n in enumerate(cfg.n_grid):
            h_hat = np.empty((len(hs), cfg.replicates))
            se = np.empty_like(h_hat)
            hbar = np.empty_like(h_hat)
            covered = np.zeros_like(h_hat, dtype=bool)
            clamped = np.zeros_like(covered)
            for r in range(cfg.replicates):
                seed = derive_seed(cfg.master_seed, i_h, i_n, r)
                try:
                    path = generate(hurst, n, seed, cfg.method)
                except Exception as exc:
                    raise RuntimeError(f"simulation failed in cell H={hurst}, n={n}, replicate {r}: {exc}") from exc
                for j, h in enumerate(hs):
                    res = estimate(path, h, cfg.alpha, variance=table, rho_shift=cfg.rho_shift)
                    h_hat[j, r], se[j, r], hbar[j, r] = res.h_hat, res.std_error, res.h_bar
                    covered[j, r] = res.ci_low <= hurst <= res.ci_high
                    clamped[j, r] = res.clamped
            n_ratios = n - 2
            for j, h in enumerate(hs):
                err = h_hat[j] - hurst
                z = err / se[j]
                model = cfg.variance.model(h, hurst)
                sigma_h = math.sqrt(model.sigma_h2)
                hv = n_ratios * float(np.var(hbar[j], ddof=1))
                ks = stats.kstest(z, "norm")
                out.append(CellResult(
                    hurst=float(hurst),
                    n=int(n),
                    h_id=h.id,
                    replicates=cfg.replicates,
                    bias=float(err.mean()),
                    rmse=float(np.sqrt(np.mean(err**2))),
                    coverage=float(covered[j].mean()),
                    mean_std_error=float(se[j].mean()),
                    emp_std=float(np.std(h_hat[j], ddof=1)),
                    sigma_h=sigma_h,
                    predicted_std=sigma_h / math.sqrt(n_ratios),
                    skewness=float(stats.skew(z)),
                    excess_kurtosis=float(stats.kurtosis(z)),
                    ks_stat=float(ks.statistic),
                    ks_pvalue=float(ks.pvalue),
                    clamp_rate=float(clamped[j].mean()),
                    sigma_f2=model.sigma_f2,
                    hbar_var_scaled=hv,
                    sigma_f2_gap=abs(model.sigma_f2 - hv) / hv,
                ))
    return out


def coverage_band(alpha: float, replicates: int) -> tuple[float, float]:
    """Acceptance band for empirical coverage of a (1 - alpha) interval.

    [0.90, 0.98] at alpha = 0.05, widened to a binomial 3-sigma band plus
    slack when there are too few replicates for that band to be fair.
    """
    target = 1.0 - alpha
    lo, hi = target - 0.05, target + 0.03
    sd = math.sqrt(alpha * (1 - alpha) / replicates)
    lo = min(lo, target - 3 * sd - 0.02)
    hi = max(hi, target + 3 * sd)
    return max(lo, 0.0), min(hi, 1.0)


def _clamp_flags(cells: list[CellResult]) -> list[str]:
    return [
        f"clamp rate {c.clamp_rate:.3f} >= 0.01 in cell {c.key}"
        for c in cells
        if c.n >= 4096 and 0.1 <= c.hurst <= 0.9 and c.clamp_rate >= 0.01
    ]


def run_consistency(cfg: ExperimentConfig, table: Optional[VarianceTable] = None) -> ExperimentReport:
    """RMSE decay with n: each step's RMSE ratio must sit near sqrt(n_prev / n_next)."""
    cells = simulate_cells(cfg, table)
    checks = []
    flags = _clamp_flags(cells)
    for hurst in cfg.hurst_grid:
        for h_id in cfg.h_ids:
            row = sorted((c for c in cells if c.hurst == hurst and c.h_id == h_id), key=lambda c: c.n)
            for a, b in zip(row, row[1:]):
                rate = math.sqrt(a.n / b.n)
                checks.append(Check("rmse_ratio", f"{b.key}/n={a.n}", b.rmse / a.rmse, 0.7 * rate, 1.44 * rate))
                if b.rmse >= a.rmse:
                    flags.append(f"RMSE not decreasing from n={a.n} to n={b.n} at H={hurst:g}, h={h_id}")
            for c in row:
                bound = 2 * c.rmse / math.sqrt(c.replicates) + 0.01
                checks.append(Check("abs_bias", c.key, abs(c.bias), 0.0, bound))
    return ExperimentReport("consistency", cfg.to_dict(), cells, checks, flags)


def run_clt(
    cfg: ExperimentConfig,
    table: Optional[VarianceTable] = None,
    variance_check_from: int = 1000,
) -> ExperimentReport:
    """Standardized residuals against N(0, 1), CI coverage and the long-run variance.

    The sigma_f2 agreement check needs enough replicates for the empirical
    variance to be sharp; it is only asserted from ``variance_check_from``.
    """
    if cfg.replicates < 300:
        raise ValueError("CLT experiments need at least 300 replicates")
    cells = simulate_cells(cfg, table)
    lo, hi = coverage_band(cfg.alpha, cfg.replicates)
    checks = []
    for c in cells:
        checks.append(Check("coverage", c.key, c.coverage, lo, hi))
        checks.append(Check("ks_pvalue", c.key, c.ks_pvalue, 0.01, 1.0))
        checks.append(Check("abs_skewness", c.key, abs(c.skewness), 0.0, 0.35))
        checks.append(Check("abs_excess_kurtosis", c.key, abs(c.excess_kurtosis), 0.0, 0.7))
        if cfg.replicates >= variance_check_from:
            checks.append(Check("sigma_f2_gap", c.key, c.sigma_f2_gap, 0.0, 0.15))
    return ExperimentReport("clt", cfg.to_dict(), cells, checks, _clamp_flags(cells))


def compare_h(cfg: ExperimentConfig, table: Optional[VarianceTable] = None) -> ExperimentReport:
    """Side-by-side efficiency of the h-functions on identical paths."""
    if len(cfg.h_ids) < 2:
        raise ValueError("compare_h needs at least two h-functions")
    cells = simulate_cells(cfg, table)
    checks = []
    for c in cells:
        finite = float(math.isfinite(c.sigma_h) and c.sigma_h > 0)
        checks.append(Check("sigma_h_finite", c.key, finite, 1.0, 1.0))
        checks.append(Check("std_vs_theory", c.key, c.emp_std / c.predicted_std, 0.8, 1.2))
    for hurst in cfg.hurst_grid:
        for n in cfg.n_grid:
            row = [c for c in cells if c.hurst == hurst and c.n == n]
            bands = []
            for c in row:
                sd = math.sqrt(max(c.coverage * (1 - c.coverage), 1e-4) / c.replicates)
                bands.append((c.coverage - 3 * sd, c.coverage + 3 * sd))
            overlap = min(b[1] for b in bands) - max(b[0] for b in bands)
            checks.append(Check("coverage_overlap", f"H={hurst:g},n={n}", overlap, 0.0, math.inf))
    return ExperimentReport("compare_h", cfg.to_dict(), cells, checks, _clamp_flags(cells))


@dataclass
class ValidationConfig:
    """The three experiment families run by ``validate``; a section set to None is skipped."""

    consistency: Optional[ExperimentConfig]
    clt: Optional[ExperimentConfig]
    variance: Optional[ExperimentConfig]
    compare: Optional[ExperimentConfig]

    @classmethod
    def profile(cls, name: str = "full", master_seed: int = 2016, rho_shift: float = 0.0) -> "ValidationConfig":
        if name not in ("quick", "full"):
            raise ValueError(f"unknown profile {name!r}")
        quick = name == "quick"
        common = dict(master_seed=master_seed, rho_shift=rho_shift)
        return cls(
            consistency=ExperimentConfig([0.5], [2**9, 2**11, 2**13], 100 if quick else 200, **common),
            clt=ExperimentConfig([0.3, 0.5, 0.7], [2**12], 300 if quick else 500, **common),
            variance=None if quick else ExperimentConfig([0.5], [2**12], 2000, **common),
            compare=ExperimentConfig([0.5], [2**12 if quick else 2**13], 300 if quick else 1000, **common),
        )

    @classmethod
    def from_dict(cls, d: dict, rho_shift: float = 0.0) -> "ValidationConfig":
        shared = {k: d[k] for k in ("alpha", "master_seed", "method") if k in d}
        if "variance_config" in d:
            shared["variance"] = VarianceConfig(**d["variance_config"])
        shared["rho_shift"] = d.get("rho_shift", rho_shift)
        sections = {}
        for name in ("consistency", "clt", "variance", "compare"):
            sec = d.get(name)
            sections[name] = None if sec is None else ExperimentConfig(**{**shared, **sec})
        return cls(**sections)


def run_validation(vcfg: ValidationConfig) -> list[ExperimentReport]:
    tables: dict[VarianceConfig, VarianceTable] = {}

    def table(cfg):
        return tables.setdefault(cfg.variance, VarianceTable(cfg.variance))

    reports = []
    if vcfg.consistency:
        reports.append(run_consistency(vcfg.consistency, table(vcfg.consistency)))
    if vcfg.clt:
        reports.append(run_clt(vcfg.clt, table(vcfg.clt)))
    if vcfg.variance:
        rep = run_clt(vcfg.variance, table(vcfg.variance), variance_check_from=0)
        rep.kind = "variance"
        rep.checks = [c for c in rep.checks if c.name == "sigma_f2_gap"]
        reports.append(rep)
    if vcfg.compare:
        reports.append(compare_h(vcfg.compare, table(vcfg.compare)))
    return reports


def write_reports(reports: list[ExperimentReport], out_dir: str | Path) -> Path:
    """One ``<kind>_cells.csv`` per report plus ``summary.json``; returns the summary path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    for rep in reports:
        rep.write_csv(out_dir / f"{rep.kind}_cells.csv")
    summary = {
        "passed": all(r.passed for r in reports),
        "failed_checks": [dict(kind=r.kind, **c.to_dict()) for r in reports for c in r.failed],
        "reports": [r.summary() for r in reports],
    }
    path = out_dir / "summary.json"
    path.write_text(json.dumps(summary, indent=2, default=_json_default) + "\n")
    return path


def _json_default(o):
    if isinstance(o, float) and not math.isfinite(o):
        return str(o)
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not JSON serializable: {type(o)}")
