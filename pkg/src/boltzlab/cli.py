"""Command-line entry point: configuration-driven experiment runner.

Usage: boltzlab KIND --config CONFIG.yaml [--seed N] [--threads N] [--out DIR]
Exit codes: 0 success, 2 validation error, 3 numerical failure.
"""

import argparse
import sys

from .config import KINDS, ValidationError, load_config
from .experiments import run


def build_parser():
    parser = argparse.ArgumentParser(
        prog="boltzlab",
        description="Kinetic-theory numerics: scattering, kernels, linearized "
                    "operators, Gibbs ensembles, torus dynamics, cluster "
                    "verification and kinetic solves.")
    sub = parser.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        p = sub.add_parser(kind)
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed")
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config,
                          overrides={"seed": args.seed,
                                     "threads": args.threads,
                                     "out_dir": args.out})
    except ValidationError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    if cfg.kind != args.kind:
        print(f"config error: config kind {cfg.kind!r} does not match "
              f"subcommand {args.kind!r}", file=sys.stderr)
        return 2
    code, outputs = run(cfg)
    for out in outputs:
        print(out)
    return code


if __name__ == "__main__":
    sys.exit(main())
