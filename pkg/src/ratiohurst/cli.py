"""Command-line front end.

    ratiohurst simulate --hurst 0.7 --n 4096 --seed 42 -o path.csv
    ratiohurst estimate path.csv --h sin
    ratiohurst variance --h ir --hurst 0.5
    ratiohurst validate --quick --out-dir report/

Exit codes: 0 success, 1 runtime or data failure, 2 usage error.
The default seed for ``simulate`` and the variance Monte Carlo can be set
with the RATIOHURST_SEED environment variable; ``--seed`` overrides it.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .errors import DomainError, SimulationError, ZeroDifferenceError
from .estimator import DEFAULT_VARIANCE_SEED, VarianceConfig, estimate, sigma_f2
from .fbm_sim import generate, write_path
from .mc_harness import ValidationConfig, run_validation, write_reports
from .stats_core import BUILTIN_IDS, get_h, read_trajectory

SEED_ENV = "RATIOHURST_SEED"


def _default_seed(fallback: int) -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return fallback
    try:
        return int(raw)
    except ValueError:
        raise SystemExit(f"error: {SEED_ENV}={raw!r} is not an integer")


def _hurst(text: str) -> float:
    try:
        v = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}")
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"hurst must lie in the open interval (0, 1), got {v}")
    return v


def _alpha(text: str) -> float:
    v = float(text)
    if not 0.0 < v < 1.0:
        raise argparse.ArgumentTypeError(f"alpha must lie in the open interval (0, 1), got {v}")
    return v


def _int_at_least(lo: int):
    def parse(text: str) -> int:
        try:
            v = int(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"not an integer: {text!r}")
        if v < lo:
            raise argparse.ArgumentTypeError(f"must be >= {lo}, got {v}")
        return v

    return parse


def _seed(text: str) -> int:
    v = _int_at_least(0)(text)
    if v >= 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _add_variance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--k-max", type=_int_at_least(1), default=None, help="lag truncation (default 200)")
    p.add_argument("--mc-samples", type=_int_at_least(100_000), default=None,
                   help="Monte Carlo draws for the long-run variance (default 100000)")
    p.add_argument("--variance-seed", type=_seed, default=None, help="seed of the variance Monte Carlo")
    p.add_argument("--variance-config", type=Path, default=None,
                   help="JSON file with any of {k_max, mc_samples, seed}; flags take precedence")


def _variance_config(args) -> VarianceConfig:
    cfg = {"k_max": 200, "mc_samples": 100_000, "seed": _default_seed(DEFAULT_VARIANCE_SEED)}
    if args.variance_config is not None:
        try:
            loaded = json.loads(args.variance_config.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise _Usage(f"cannot read variance config {args.variance_config}: {exc}")
        unknown = set(loaded) - set(cfg)
        if unknown:
            raise _Usage(f"unknown variance config keys: {sorted(unknown)}")
        cfg.update(loaded)
    for flag, key in (("k_max", "k_max"), ("mc_samples", "mc_samples"), ("variance_seed", "seed")):
        if getattr(args, flag) is not None:
            cfg[key] = getattr(args, flag)
    return VarianceConfig(**cfg)


class _Usage(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ratiohurst", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="simulate an fBm path on [0, 1] and write CSV + JSON sidecar")
    p.add_argument("--hurst", type=_hurst, required=True)
    p.add_argument("--n", type=_int_at_least(4), required=True, help="number of grid steps")
    p.add_argument("--seed", type=_seed, default=None)
    p.add_argument("--method", choices=["circulant", "cholesky"], default="circulant")
    p.add_argument("-o", "--output", type=Path, required=True)

    p = sub.add_parser("estimate", help="estimate H from a trajectory CSV")
    p.add_argument("input", type=Path)
    p.add_argument("--h", dest="h_id", choices=BUILTIN_IDS, default="sin")
    p.add_argument("--alpha", type=_alpha, default=0.05)
    p.add_argument("--column", default=None, help="column name or 0-based index")
    _add_variance_flags(p)

    p = sub.add_parser("variance", help="asymptotic variance at a given H")
    p.add_argument("--h", dest="h_id", choices=BUILTIN_IDS, default="sin")
    p.add_argument("--hurst", type=_hurst, required=True)
    _add_variance_flags(p)

    p = sub.add_parser("validate", help="run the Monte Carlo acceptance experiments")
    prof = p.add_mutually_exclusive_group()
    prof.add_argument("--quick", dest="profile", action="store_const", const="quick")
    prof.add_argument("--full", dest="profile", action="store_const", const="full")
    p.add_argument("--config", type=Path, default=None, help="experiment config JSON (overrides the profile)")
    p.add_argument("--seed", type=_seed, default=None, help="master seed")
    p.add_argument("--out-dir", type=Path, default=Path("validation_report"))
    p.add_argument("--inject-rho-error", type=float, default=0.0, help=argparse.SUPPRESS)
    p.set_defaults(profile="full")
    return parser


def cmd_simulate(args) -> int:
    seed = args.seed if args.seed is not None else _default_seed(0)
    try:
        path = generate(args.hurst, args.n, seed, args.method)
    except SimulationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    args.output.parent.mkdir(parents=True, exist_ok=True)
    write_path(path, args.output)
    return 0


def cmd_estimate(args) -> int:
    vcfg = _variance_config(args)
    try:
        sample = read_trajectory(args.input, args.column)
    except OSError as exc:
        print(f"error: cannot read {args.input}: {exc}", file=sys.stderr)
        return 1
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    try:
        res = estimate(sample, args.h_id, args.alpha, variance=vcfg)
    except ZeroDifferenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except DomainError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if res.clamped:
        print(f"warning: {res.diagnostics['warning']}", file=sys.stderr)
    print(json.dumps(res.to_dict(), indent=2))
    return 0


def cmd_variance(args) -> int:
    vcfg = _variance_config(args)
    vm = sigma_f2(get_h(args.h_id), args.hurst, vcfg.k_max, vcfg.mc_samples, vcfg.seed)
    out = {
        "h_id": vm.h_id,
        "hurst": vm.hurst,
        "sigma_f2": vm.sigma_f2,
        "sigma_h2": vm.sigma_h2,
        "m_prime": vm.m_prime,
        "k_max": vm.k_max,
        "mc_samples": vm.mc_samples,
        "mc_stderr": vm.mc_stderr,
        "var_term": vm.var_term,
        "tail_bound": vm.tail_bound,
        "expansion_from": vm.expansion_from,
        "expansion_bound": vm.expansion_bound,
        "seed": vm.seed,
    }
    print(json.dumps(out, indent=2))
    return 0


def cmd_validate(args) -> int:
    master = args.seed if args.seed is not None else _default_seed(2016)
    if args.config is not None:
        try:
            raw = json.loads(args.config.read_text())
            if args.seed is not None:
                raw["master_seed"] = master
            vcfg = ValidationConfig.from_dict(raw, rho_shift=args.inject_rho_error)
        except (OSError, json.JSONDecodeError, TypeError, ValueError, KeyError) as exc:
            raise _Usage(f"invalid experiment config {args.config}: {exc}")
    else:
        vcfg = ValidationConfig.profile(args.profile, master, args.inject_rho_error)
    reports = run_validation(vcfg)
    summary = write_reports(reports, args.out_dir)
    failed = [(r.kind, c) for r in reports for c in r.failed]
    for r in reports:
        for c in r.checks:
            status = "PASS" if c.passed else "FAIL"
            print(f"{status} {r.kind:<11} {c.name:<20} {c.cell:<28} {c.value:.4g} in [{c.low:.4g}, {c.high:.4g}]")
        for f in r.flags:
            print(f"FLAG {r.kind:<11} {f}")
    print(f"report: {summary}")
    if failed:
        print(f"{len(failed)} check(s) failed:", file=sys.stderr)
        for kind, c in failed:
            print(f"  {kind}: {c.name} {c.cell} = {c.value:.4g}", file=sys.stderr)
        return 1
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "variance": cmd_variance,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except _Usage as exc:
        parser.error(str(exc))


if __name__ == "__main__":
    sys.exit(main())
