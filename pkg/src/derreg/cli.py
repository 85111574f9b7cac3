"""Command-line scenario runner.

    derreg --scenario bundled:test2.scenario --out runs/test2

Exit codes: 0 success, 2 configuration error, 3 target infeasible at every
second, 4 I/O error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from derreg.fleet import FleetError
from derreg.scenario import (
    DATA_DIR, SOLVER_CHOICES, STAGES, ConfigError, InfeasibleScenarioError,
    load_scenario, run_scenario, write_outputs,
)
from derreg.signal import TraceFormatError

log = logging.getLogger("derreg")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_INFEASIBLE = 3
EXIT_IO = 4


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _budget(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("budget must be at least one round")
    return v


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="derreg", description="Run a DER regulation-tracking scenario.")
    ap.add_argument("--scenario", required=True,
                    help="scenario file; 'bundled:NAME' picks a shipped scenario")
    ap.add_argument("--solver", choices=SOLVER_CHOICES, help="override the scenario's solver")
    ap.add_argument("--stage", choices=STAGES, help="override single or two-stage actuation")
    ap.add_argument("--seed", type=_seed, help="override the scenario seed")
    ap.add_argument("--out", type=Path, default=Path("derreg_out"), help="output directory")
    ap.add_argument("--budget", type=_budget, help="solver rounds per second")
    ap.add_argument("-v", "--verbose", action="store_true", help="log every clamped second")
    return ap


def _scenario_path(arg: str) -> Path:
    if arg.startswith("bundled:"):
        return DATA_DIR / arg[len("bundled:"):]
    return Path(arg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    path = _scenario_path(args.scenario)
    if not path.is_file():
        print(f"error: scenario file not found: {path}", file=sys.stderr)
        return EXIT_IO
    try:
        sc = load_scenario(path)
        run = run_scenario(sc, solver=args.solver, stage=args.stage, seed=args.seed, budget=args.budget)
    except (ConfigError, FleetError, TraceFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except InfeasibleScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    try:
        write_outputs(run, args.out)
    except OSError as exc:
        print(f"error: cannot write outputs: {exc}", file=sys.stderr)
        return EXIT_IO
    sys.stdout.write(run.report.text())
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
