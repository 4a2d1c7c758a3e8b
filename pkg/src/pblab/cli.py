"""Command-line entry point: ``pblab run|describe|validate --config PATH``.

Exit codes: 0 success, 1 verdict failure, 2 configuration error, 3 numerical
failure (blow-up, unresolvable step size or Picard non-convergence).
"""
from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from .config import build, load
from .errors import BlowUpError, ConfigError, PicardError, StabilityError

EXIT_OK, EXIT_VERDICT, EXIT_CONFIG, EXIT_BLOWUP = 0, 1, 2, 3


def resolve_threads(arg):
    if arg is not None:
        return max(1, arg)
    env = os.environ.get("PBLB_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"PBLB_THREADS must be an integer, got {env!r}") from None
    return os.cpu_count() or 1


def _parser():
    ap = argparse.ArgumentParser(prog="pblab", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "execute an experiment"),
                        ("describe", "print the resolved plan without computing"),
                        ("validate", "check a configuration file")):
        sp_ = sub.add_parser(name, help=help_)
        sp_.add_argument("--config", required=True, type=Path)
        sp_.add_argument("--seed", type=int, default=None)
        if name == "run":
            sp_.add_argument("--out", type=Path, default=None)
            sp_.add_argument("--threads", type=int, default=None)
    return ap


def main(argv=None):
    args = _parser().parse_args(argv)
    try:
        cfg, digest = load(args.config, args.seed)
        if args.command == "validate":
            print(f"ok: {args.config} ({cfg['experiment']['kind']})")
            return EXIT_OK
        run = build(cfg)
        if args.command == "describe":
            from .runner import describe
            print(describe(run))
            return EXIT_OK
        threads = resolve_threads(args.threads)
        out = args.out or Path(run.out_dir)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    from .runner import execute
    try:
        code = execute(run, out, digest, threads)
    except (BlowUpError, StabilityError, PicardError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_BLOWUP
    print(json.dumps({"exit_code": code, "out": str(out)}))
    return code


if __name__ == "__main__":
    sys.exit(main())
