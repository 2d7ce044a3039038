"""Command-line entry point.

    dcflow run        --example {1,2,toy} --levels 16,32 ...
    dcflow sweep-beta --example 1 --level 32 --fractions 0,0.1,0.2,0.5 ...
    dcflow refine     --example 1 --levels 8,16,32,64,128 ...

A JSON file passed via --config overrides any flag of the same name.  Exit
code 0 on success, 2 when any result row failed.
"""

import argparse
import json
import sys

from .experiments import (
    ExperimentConfig,
    beta_sweep,
    emit_rates,
    emit_report,
    emit_sweep,
    refinement_study,
    run_example,
)

EXAMPLE_ALIASES = {"1": "example1", "2": "example2", "toy": "toy",
                   "example1": "example1", "example2": "example2"}
ACCEL_ALIASES = {"none": "none", "nesterov": "nesterov", "heavyball": "heavy_ball"}


def _levels(text):
    return tuple(int(part) for part in str(text).split(","))


def _fractions(text):
    return [float(part) for part in str(text).split(",")]


def _add_common(parser):
    parser.add_argument("--example", default="1", choices=sorted(EXAMPLE_ALIASES))
    parser.add_argument("--alpha", type=float, default=None,
                        help="regularization weight (default: per-example)")
    parser.add_argument("--beta-frac", type=float, default=None,
                        help="sparsity weight as a fraction of the critical value")
    parser.add_argument("--accel", default="nesterov", choices=sorted(ACCEL_ALIASES))
    parser.add_argument("--gamma", type=float, default=0.5)
    parser.add_argument("--eps0", type=float, default=1.0)
    parser.add_argument("--tol", type=float, default=1e-6)
    parser.add_argument("--max-iter", type=int, default=20)
    parser.add_argument("--out", default="out")
    parser.add_argument("--config", default=None, help="JSON file overriding flags")


def build_parser():
    parser = argparse.ArgumentParser(prog="dcflow")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solver profile over mesh levels")
    run.add_argument("--levels", type=_levels, default=(16,))
    run.add_argument("--no-compare", action="store_true",
                     help="skip the plain-DCA baseline")
    _add_common(run)

    sweep = sub.add_parser("sweep-beta", help="control support vs sparsity weight")
    sweep.add_argument("--level", type=int, default=32)
    sweep.add_argument("--fractions", type=_fractions, default=[0.0, 0.1, 0.2, 0.5])
    _add_common(sweep)

    refine = sub.add_parser("refine", help="mesh-refinement error study")
    refine.add_argument("--levels", type=_levels, default=(8, 16, 32, 64, 128),
                        help="ascending, last level is the reference")
    _add_common(refine)
    return parser


def _apply_config_file(args):
    if not args.config:
        return args
    with open(args.config) as fh:
        overrides = json.load(fh)
    for key, value in overrides.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise SystemExit(f"unknown config key {key!r}")
        if dest == "levels":
            value = tuple(int(v) for v in value)
        setattr(args, dest, value)
    return args


def _experiment_config(args, levels):
    return ExperimentConfig(
        example=EXAMPLE_ALIASES[str(args.example)],
        levels=levels,
        alpha=args.alpha,
        beta_frac=args.beta_frac,
        accel=ACCEL_ALIASES[str(args.accel)],
        gamma=args.gamma,
        eps0=args.eps0,
        tol=args.tol,
        max_iter=args.max_iter,
        out_dir=args.out,
        compare_dca=not getattr(args, "no_compare", False),
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    args = _apply_config_file(args)

    if args.command == "run":
        cfg = _experiment_config(args, args.levels)
        report = run_example(cfg)
        emit_report(report, cfg.out_dir)
        if report.any_failed:
            for row in report.rows:
                if row.failed:
                    print(f"FAILED {row.method} m={row.m}: {row.error}", file=sys.stderr)
            return 2
        return 0

    if args.command == "sweep-beta":
        cfg = _experiment_config(args, (args.level,))
        sweep = beta_sweep(cfg, args.fractions)
        emit_sweep(sweep, cfg.out_dir)
        return 0

    if args.command == "refine":
        cfg = _experiment_config(args, args.levels)
        rates = refinement_study(cfg, args.levels)
        emit_rates(rates, cfg.out_dir)
        return 0

    raise SystemExit(f"unknown command {args.command!r}")


if __name__ == "__main__":
    sys.exit(main())
