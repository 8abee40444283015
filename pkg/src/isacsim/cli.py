"""Command-line experiment runner.

Usage:
    isacsim run <experiment> [--config FILE] [--seeds a..b] [--out DIR]
                 [--profile desk|paper] [--with-oracle] [--workers N]

Exit codes: 0 success, 2 infeasible instance, 3 solver failure.
"""

from __future__ import annotations

import argparse
import sys

from .config import SystemConfig
from .experiments import EXPERIMENTS, default_spec, run_experiment
from .solver import InfeasibleInstanceError, SolverFailureError

EXIT_OK = 0
EXIT_INFEASIBLE = 2
EXIT_SOLVER_FAILURE = 3


def parse_seeds(text: str) -> tuple[int, ...]:
    """'a..b' inclusive range or comma-separated list."""
    if ".." in text:
        lo, hi = text.split("..", 1)
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(tok) for tok in text.split(",") if tok)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="isacsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    run_p = sub.add_parser("run", help="run one experiment and write CSV results")
    run_p.add_argument("experiment", choices=EXPERIMENTS)
    run_p.add_argument("--config", help="JSON config overriding the profile defaults")
    run_p.add_argument("--seeds", default="0..19", help="'a..b' range or comma list")
    run_p.add_argument("--out", default="results", help="output directory")
    run_p.add_argument("--profile", choices=("desk", "paper"), default="desk")
    run_p.add_argument("--with-oracle", action="store_true")
    run_p.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    base = SystemConfig.from_json(args.config) if args.config else None
    spec = default_spec(
        args.experiment,
        out_dir=args.out,
        seeds=parse_seeds(args.seeds),
        profile=args.profile,
        base_config=base,
        with_oracle=args.with_oracle,
        workers=args.workers,
    )
    try:
        path = run_experiment(spec)
    except InfeasibleInstanceError as err:
        print(f"infeasible instance: {err}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SolverFailureError as err:
        print(f"solver failure: {err}", file=sys.stderr)
        return EXIT_SOLVER_FAILURE
    print(f"wrote {path}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
