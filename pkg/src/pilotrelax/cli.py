"""Command line: ``simulate``, ``oracle`` and ``selftest``.

Exit status 0 on success, 2 for invalid input, 3 when a run aborts on a
non-finite field.
"""
from __future__ import annotations

import argparse
import math
import sys

from .config import U64_MAX, ConfigError, parse_pairs, build_config
from .fields import Grid, PhysicalParams, write_field_snapshot
from .runner import NumericalAbort, run_scenario
from .scenarios import box_modes_at, oracle_free_gaussian, random_phases

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_ABORT = 3

ORACLE_CASES = ("free-gaussian", "box-modes")


def _u64(text: str) -> int:
    val = int(text, 0)
    if not 0 <= val <= U64_MAX:
        raise argparse.ArgumentTypeError(f"{text} is not an unsigned 64-bit integer")
    return val


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pilotrelax", description="Pilot-wave relaxation simulator.")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a configured scenario")
    sim.add_argument("--config", required=True, help="path to a key = value config file")
    sim.add_argument("--seed", type=_u64, help="override the config seed")
    sim.add_argument("--out", help="override the output directory")

    orc = sub.add_parser("oracle", help="print a closed-form field as a snapshot")
    orc.add_argument("--case", required=True, choices=ORACLE_CASES)
    orc.add_argument("--t", type=float, default=0.0, help="time (default 0)")
    orc.add_argument("--seed", type=_u64, default=0, help="phase seed for box-modes")
    orc.add_argument("--modes", type=int, default=16, help="mode count for box-modes")

    sub.add_parser("selftest", help="run the quick property checks")
    return p


def _simulate(args) -> int:
    try:
        with open(args.config) as fh:
            values = parse_pairs(fh.read())
        if args.seed is not None:
            values["seed"] = args.seed
        if args.out is not None:
            values["out_dir"] = args.out
        cfg = build_config(values)
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    try:
        result = run_scenario(cfg)
    except NumericalAbort as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ABORT
    for key, val in result.summary.items():
        print(f"{key} = {val:.17g}" if isinstance(val, float) else f"{key} = {val}")
    return EXIT_OK


def _oracle(args) -> int:
    if not math.isfinite(args.t) or args.t < 0:
        print("error: --t must be a finite time >= 0", file=sys.stderr)
        return EXIT_INVALID
    params = PhysicalParams()
    try:
        if args.case == "free-gaussian":
            grid = Grid(1, 1024, 40.0)
            psi = oracle_free_gaussian(grid, 0.5, params, args.t)
        else:
            grid = Grid(1, 256, 2.0 * math.pi)
            if not 1 <= args.modes <= grid.n // 2 - 1:
                raise ValueError(f"--modes must lie in [1, {grid.n // 2 - 1}]")
            psi = box_modes_at(grid, random_phases(args.seed, args.modes), args.t, params)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    write_field_snapshot(sys.stdout, psi, grid)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    if args.command == "simulate":
        return _simulate(args)
    if args.command == "oracle":
        return _oracle(args)
    from .selftest import run_selftest

    return EXIT_OK if run_selftest() else 1


if __name__ == "__main__":
    sys.exit(main())
