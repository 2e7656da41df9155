"""Command line runner: ``hkf <experiment> [--config cfg.json] [options]``.

Each experiment writes estimates.csv, loss_curve.csv (when curves are
recorded), l2curve.csv (for the error-vs-level experiment) and report.json to
the output directory.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys

from .config import EXPERIMENTS, ConfigError, default_config, load_config
from .experiments import run_experiment
from .reports import write_report


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hkf",
        description="Empirical-Bayes and kernel-flow hyperparameter "
                    "estimation experiments")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="JSON config (defaults per experiment)")
        p.add_argument("--seed", type=int, help="master seed override")
        p.add_argument("--instances", type=int, help="instance count override")
        p.add_argument("--out", help="output directory")
        p.add_argument("--jitter", type=float,
                       help="explicit diagonal jitter for Gram factorizations")
        p.add_argument("--truncation-extra", type=int, dest="truncation_extra",
                       help="series truncation levels beyond the grid "
                            "resolution (0 reproduces grid-resolution "
                            "truncation)")
        p.add_argument("--workers", type=int, help="instance worker pool size")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config:
            config = load_config(args.config)
            if config.experiment != args.experiment:
                raise ConfigError(
                    f"config is for {config.experiment!r}, not {args.experiment!r}")
        else:
            config = default_config(args.experiment)
        overrides = {k: getattr(args, k) for k in
                     ("seed", "instances", "out", "jitter", "truncation_extra",
                      "workers")
                     if getattr(args, k, None) is not None}
        if overrides:
            config = dataclasses.replace(config, **overrides)
    except (ConfigError, OSError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2

    report = run_experiment(config)
    outdir = config.out or f"out/{config.experiment}"
    paths = write_report(report, outdir)
    summary = report.summary()
    print(f"{config.experiment}: {len(report.rows)} result rows -> {outdir}")
    for key in sorted(summary):
        entry = summary[key]
        if "mean" in entry:
            line = (f"  {key}: mean {entry['mean']:.6g}"
                    f" var {entry['variance']:.3g}"
                    f" ({entry['n_ok']}/{entry['n_total']} ok")
            if entry.get("boundary_rate", 0) > 0:
                line += f", boundary rate {entry['boundary_rate']:.0%}"
            print(line + ")")
        else:
            print(f"  {key}: no successful instances")
    for kind, path in sorted(paths.items()):
        print(f"  wrote {path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
