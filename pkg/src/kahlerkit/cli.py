"""``kahlerkit`` command-line front end.

Exit codes: 0 when every check passes, 2 when a check fails, 1 on a crash or
a configuration error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from ._random import check_seed
from .config import ConfigError, load_config, parse_t_list
from .experiments import COMMANDS

EXIT_OK, EXIT_CRASH, EXIT_FAIL = 0, 1, 2


def _seed(text):
    try:
        return check_seed(int(text, 0))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _workers(text):
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("workers must be at least 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="kahlerkit", description="Perturbed scalar curvature experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in list(COMMANDS) + ["suite"]:
        sp = sub.add_parser(name)
        sp.add_argument("--config", type=Path, help="INI experiment config")
        sp.add_argument("--out", type=Path, help="output directory (default ./out/<command>)")
        sp.add_argument("--workers", type=_workers, help="worker threads")
        sp.add_argument("--seed", type=_seed, help="unsigned 64-bit seed")
        sp.add_argument("--t", dest="t", help="comma list or lo:hi:step of perturbation parameters")
        if name == "suite":
            sp.add_argument("--quick", action="store_true", help="skip the reproducibility rerun")
    return p


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        if args.workers is not None:
            cfg.workers = args.workers
        if args.seed is not None:
            cfg.seed = args.seed
        if args.t is not None:
            cfg.t = parse_t_list(args.t)
        out = args.out or (Path(cfg.out) if cfg.out else Path("out") / args.command)
        if args.command == "suite":
            from .suite import run_suite
            report = run_suite(workers=cfg.workers, seed=cfg.seed, out=out, rerun=not args.quick)
        else:
            report = COMMANDS[args.command](cfg, out=out)
        path = report.write(out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CRASH
    except Exception:  # noqa: BLE001 - any crash maps to exit code 1
        traceback.print_exc()
        return EXIT_CRASH
    failed = [c for c in report.checks if not c.passed]
    for c in failed:
        print(f"FAIL {c.name}: {c.value:.3e} (tolerance {c.tolerance:.1e}) {c.detail}".rstrip(), file=sys.stderr)
    print(f"{args.command}: {len(report.checks) - len(failed)}/{len(report.checks)} checks passed -> {path}")
    return EXIT_FAIL if failed else EXIT_OK


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
