"""Command line entry point: run, validate, list-experiments."""
from __future__ import annotations

import argparse
import logging
import sys

from .config import ConfigError, load_config, validate
from .experiments import EXPERIMENTS
from .run import EXIT_PASS, EXIT_USAGE, run


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="spectraflow", description="Spectral flow experiments at exact-diagonalization scale.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    r = sub.add_parser("run", help="run an experiment config")
    r.add_argument("config")
    r.add_argument("--workers", type=int, default=None, help="worker threads (default: $SPECTRAFLOW_WORKERS or 1)")
    r.add_argument("--output", default=None, help="override the output directory")
    r.add_argument("-v", "--verbose", action="store_true")
    v = sub.add_parser("validate", help="static checks of a config")
    v.add_argument("config")
    sub.add_parser("list-experiments", help="list experiment names and their checks")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "list-experiments":
        for name, spec in EXPERIMENTS.items():
            print(f"{name:22s} {spec.description}  [checks: {', '.join(spec.checks)}]")
        return EXIT_PASS
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "validate":
        diags = validate(cfg)
        for d in diags:
            print(d)
        if not diags:
            print("ok")
        return EXIT_USAGE if diags else EXIT_PASS
    if args.output:
        from pathlib import Path
        cfg.output = Path(args.output)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    rec = run(cfg, workers=args.workers, log=logging.getLogger("spectraflow").info)
    if rec.error:
        for k, v in rec.error.items():
            print(f"{k}: {v}", file=sys.stderr)
    for k, ok in rec.verdicts.items():
        print(f"{k:24s} {'PASS' if ok else 'FAIL'}")
    print(f"status: {rec.status}  (output: {cfg.output})")
    return rec.exit_code


if __name__ == "__main__":
    sys.exit(main())
