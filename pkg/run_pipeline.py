#!/usr/bin/env python3
"""
Command-line front end for the Sleep-Mode Analysis Pipeline
Usage: python run_pipeline.py <command> [--config FILE] [--out FILE]
                              [--seed N] [--override key=value ...]
"""

import argparse
import sys
from pathlib import Path
from typing import List, Optional

# Add project root to path
sys.path.append(str(Path(__file__).parent))

from models.errors import SleepModeError
from pipeline import SleepModeAnalysisPipeline
from utils.config import load_config

COMMANDS = {
    "analyze": "📊 Closed-form queue and energy metrics",
    "simulate": "🎲 Discrete-event simulation with batch-means errors",
    "validate": "🔍 Closed forms vs simulation, metric by metric",
    "sweep": "📈 Metrics over a one- or two-variable grid",
    "optimize": "🧮 Grid search for the best protocol parameters",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config merged over the defaults")
    common.add_argument("--out", help="CSV file to write")
    common.add_argument("--seed", type=int, help="Simulation seed (unsigned 64-bit)")
    common.add_argument(
        "--override",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Dotted config override, e.g. traffic.lambda=0.2 (repeatable)",
    )
    common.add_argument("--quiet", action="store_true", help="Only print errors")

    parser = argparse.ArgumentParser(
        description="Sleep-mode analysis: M/G/1 queue with vacations and warm-up"
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=text)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """Main CLI function; returns the process exit code"""
    args = build_parser().parse_args(argv)
    verbose = not args.quiet

    if verbose:
        print(f"🚀 Running {args.command}")
        if args.config:
            print(f"📄 Config: {args.config}")
        print("=" * 60)

    try:
        config = load_config(args.config, args.override)
        pipeline = SleepModeAnalysisPipeline(config, verbose=verbose)
        if args.command in ("simulate", "validate"):
            results = getattr(pipeline, args.command)(out=args.out, seed=args.seed)
        else:
            results = getattr(pipeline, args.command)(out=args.out)
    except SleepModeError as e:
        print(f"\n❌ Configuration error: {e}", file=sys.stderr)
        return e.exit_code
    except KeyboardInterrupt:
        print("\n\n⚠️ Pipeline interrupted by user")
        return 1
    except Exception as e:
        print(f"\n💥 Unexpected error: {e}")
        import traceback

        traceback.print_exc()
        return 1

    if results.get("success"):
        if verbose:
            print("\n" + "=" * 60)
            print(f"🎉 {args.command.upper()} COMPLETED SUCCESSFULLY!")
            print("=" * 60)
            if results.get("output"):
                print(f"📄 Output: {results['output']}")
        return 0

    print("\n" + "=" * 60, file=sys.stderr)
    print(f"❌ {args.command.upper()} FAILED", file=sys.stderr)
    print("=" * 60, file=sys.stderr)
    print(f"💥 Error: {results.get('error', 'Unknown error')}", file=sys.stderr)
    return int(results.get("exit_code", 1))


if __name__ == "__main__":
    sys.exit(main())
