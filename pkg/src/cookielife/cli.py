"""Command-line entry point wiring the pipeline stages.

Exit codes: 0 success, 1 usage error, 2 data or schema error, 3 numerical
non-convergence.
"""

import argparse
import os
import sys
from pathlib import Path

from . import pipeline
from .config import RunConfig
from .errors import (ConfigError, ConvergenceError, CookielifeError,
                     DataError, RowError, SchemaError)

STAGES = ("gen", "panel", "survival", "regress", "simulate", "validate",
          "report", "all")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _build_parser():
    parser = _Parser(prog="cookielife", description=__doc__)
    sub = parser.add_subparsers(dest="stage")
    for stage in STAGES:
        p = sub.add_parser(stage)
        p.add_argument("--input", type=Path, default=None,
                       help="impression log CSV (panel/all stages)")
        p.add_argument("--out", type=Path, required=True,
                       help="output directory for stage files")
        p.add_argument("--config", default=None,
                       help="JSON config path, or the word 'default'")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--threads", type=int, default=None)
        p.add_argument("--threshold", type=int, default=None,
                       choices=(7, 28),
                       help="censoring threshold in days")
        p.add_argument("--restrictions", default=None,
                       help="comma-separated lifetime limits in days")
    return parser


def run(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.stage is None:
            parser.print_usage(sys.stderr)
            print("error: a subcommand is required "
                  f"(one of: {', '.join(STAGES)})", file=sys.stderr)
            return 1
    except _UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1

    try:
        overrides = {
            "seed": args.seed,
            "threads": args.threads,
            "threshold_days": args.threshold,
            "restrictions": ([int(x) for x in args.restrictions.split(",")]
                             if args.restrictions else None),
        }
        cfg = RunConfig.load(args.config, env=os.environ,
                             overrides=overrides)
        out = args.out
        out.mkdir(parents=True, exist_ok=True)
        input_csv = args.input or (out / "impressions.csv")
        if args.stage == "gen":
            pipeline.run_gen(out, cfg, seed=args.seed)
        elif args.stage == "panel":
            pipeline.run_panel(input_csv, out, cfg)
        elif args.stage == "survival":
            pipeline.run_survival(out, cfg)
        elif args.stage == "regress":
            pipeline.run_regress(out, cfg)
        elif args.stage == "simulate":
            pipeline.run_simulate(out, cfg)
        elif args.stage == "validate":
            pipeline.run_validate(out, cfg)
        elif args.stage == "report":
            pipeline.run_report(out, cfg)
        else:
            pipeline.run_all(input_csv, out, cfg)
    except ConvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    except (SchemaError, RowError, DataError, ConfigError,
            FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except CookielifeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


def main():
    sys.exit(run())
