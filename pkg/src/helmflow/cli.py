"""Command-line interface: `helmflow run <experiment>` and
`helmflow validate-ewald`.  Exit code 0 iff the run completes and every
in-config assertion passes."""

import argparse
import os
import sys

from .config import ExperimentConfig
from .experiments import EXPERIMENTS, check_assertions, run_validate_ewald


def _load(path):
    cfg = ExperimentConfig.from_file(path)
    cfg.validate_positive([
        "grid.L", "grid.nu", "pux.R", "pux.n_g", "pux.q",
        "diffusion.eps", "sdc.t_end", "sdc.order",
        "boundary.n_panels", "ewald.tol",
    ])
    return cfg


def _execute(runner, cfg, out_dir):
    os.makedirs(out_dir, exist_ok=True)
    cfg.write(os.path.join(out_dir, "config.resolved.txt"))
    metrics = runner(cfg, out_dir)
    print(f"config hash: {cfg.hash()}")
    for name in sorted(metrics):
        print(f"{name} = {metrics[name]!r}")
    failures = check_assertions(cfg, metrics)
    for f in failures:
        print(f"ASSERTION FAILED: {f}", file=sys.stderr)
    return 1 if failures else 0


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="helmflow",
        description="Advection-diffusion on moving domains: experiment "
                    "drivers and validation utilities.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a named experiment")
    p_run.add_argument("experiment", choices=sorted(EXPERIMENTS))
    p_run.add_argument("--config", required=True, help="key = value file")
    p_run.add_argument("--out", default=None,
                       help="output directory (default: ./out-<experiment>)")

    p_ve = sub.add_parser("validate-ewald",
                          help="compare Ewald summation against the direct "
                               "quadratic-cost oracle")
    p_ve.add_argument("--config", required=True)
    p_ve.add_argument("--out", default=None)

    args = parser.parse_args(argv)
    cfg = _load(args.config)

    if args.command == "run":
        out_dir = args.out or f"out-{args.experiment}"
        return _execute(EXPERIMENTS[args.experiment], cfg, out_dir)
    out_dir = args.out or "out-validate-ewald"
    return _execute(run_validate_ewald, cfg, out_dir)


if __name__ == "__main__":
    sys.exit(main())
