"""Command-line entry point: ``realftrl run|verify|plotdata``."""
from __future__ import annotations

import argparse
import sys

from . import __version__


def _cmd_run(args) -> int:
    from .config import ConfigError, load_config
    from .runner import run_config

    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return run_config(cfg, root=args.output_root, workers=args.workers)


def _cmd_verify(args) -> int:
    from .verify import run_suite

    results = run_suite(args.level)
    failed = [r for r in results if not r.passed]
    print(f"{len(results) - len(failed)}/{len(results)} checks passed")
    return 1 if failed else 0


def _cmd_plotdata(args) -> int:
    from .plotting import plotdata

    try:
        path = plotdata(args.aggregate, args.mode, out=args.out, figure=not args.no_figure)
    except (FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="realftrl", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="run every (horizon, seed) cell of a config")
    p.add_argument("config", help="YAML or JSON experiment config")
    p.add_argument("--output-root", default=None,
                   help="directory that relative output paths resolve against "
                        "(default: $REALFTRL_OUTPUT_ROOT or the working directory)")
    p.add_argument("--workers", type=int, default=None, help="worker processes (default: available cores)")
    p.set_defaults(func=_cmd_run)

    p = sub.add_parser("verify", help="run the oracle property checks")
    p.add_argument("--level", choices=("quick", "full"), default="quick")
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("plotdata", help="write plot-ready columns from aggregate JSON")
    p.add_argument("aggregate", nargs="+", help="aggregate JSON file(s); several for a log-log fit over T")
    p.add_argument("--mode", choices=("regret-vs-t", "regret-vs-sqrtT", "loglog"), default="regret-vs-t")
    p.add_argument("--out", default=None, help="data file path (default: next to the first aggregate)")
    p.add_argument("--no-figure", action="store_true", help="skip the PNG rendered next to the data file")
    p.set_defaults(func=_cmd_plotdata)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
