"""
═══════════════════════════════════════════════════════════════════════════════
    VTSI SIM - Vehicle-Track-Structure Interaction Simulator
═══════════════════════════════════════════════════════════════════════════════

QUICK START:
-----------
1. python -m venv .venv
2. source .venv/bin/activate
3. pip install -r requirements.txt
4. python app.py cases list
5. python app.py run --case case1 --out case1.csv

COMMANDS:
--------
run       one scenario (builtin case or YAML file) -> trace CSV
sweep     peak midspan response over a list of speeds -> summary CSV
converge  refinement in elements per span and time step -> summary CSV
compare   relative L-inf deltas between two schemes on one scenario
cases     list builtin cases or print one as YAML

Exit codes: 0 success, 2 invalid input or numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import List, Optional, Sequence

import numpy as np
import pandas as pd

from exceptions import VtsiError
from metrics import summarize_trace
from scenario import (
    CASES, SCHEMES, ScenarioConfig, apply_overrides, builtin_case, compare, convergence_study,
    dump_config, list_cases, load_config, predicted_resonance_speed, simulate, sweep_speed,
    write_result, write_table,
)


# ============================================================================
# ARGUMENT PARSING
# ============================================================================

def _float_list(text: str) -> List[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _int_list(text: str) -> List[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _speed_range(text: str) -> List[float]:
    """'10:150:2' -> 10, 12, ..., 150; otherwise a comma list."""
    if ":" in text:
        start, stop, step = (float(v) for v in text.split(":"))
        return list(np.arange(start, stop + 0.5 * step, step))
    return _float_list(text)


def _add_scenario_args(p: argparse.ArgumentParser) -> None:
    source = p.add_mutually_exclusive_group(required=True)
    source.add_argument("--case", choices=sorted(CASES), help="builtin case")
    source.add_argument("--config", help="scenario YAML file")
    p.add_argument("--scheme", choices=SCHEMES)
    p.add_argument("--dt", type=float, help="time step (s)")
    p.add_argument("--elements", type=int, help="elements per span")
    p.add_argument("--speed", type=float, help="train speed (m/s)")
    p.add_argument("--seed", type=int, help="irregularity seed (switches the profile on)")
    p.add_argument("--t-end", type=float, help="simulated time (s); default until the train has left")
    p.add_argument("--probe", action="append", default=None,
                   help="probe label, repeatable: bridge:<u|v|a|r>@<x|midspan> or train:<u|v|a>@<dof>")
    p.add_argument("--workers", type=int, default=1, help="parallel runs for sweep/converge")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="vtsi", description="2-D vehicle-track-structure interaction simulator")
    ap.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario")
    _add_scenario_args(p_run)
    p_run.add_argument("--out", help="trace CSV path")
    p_run.add_argument("--compare", nargs=2, metavar=("SCHEME_A", "SCHEME_B"), choices=SCHEMES,
                       help="also print relative L-inf deltas between two schemes")

    p_sweep = sub.add_parser("sweep", help="speed sweep")
    _add_scenario_args(p_sweep)
    p_sweep.add_argument("--speeds", type=_speed_range, required=True, help="'10:150:2' or '90,94,98'")
    p_sweep.add_argument("--out", help="summary CSV path")

    p_conv = sub.add_parser("converge", help="convergence study")
    _add_scenario_args(p_conv)
    p_conv.add_argument("--elements-list", type=_int_list, default=[], help="e.g. 2,4,10,20,40,100")
    p_conv.add_argument("--dt-list", type=_float_list, default=[], help="e.g. 0.01,0.005,0.002,0.001")
    p_conv.add_argument("--out", help="summary CSV path")

    p_cmp = sub.add_parser("compare", help="compare two schemes")
    _add_scenario_args(p_cmp)
    p_cmp.add_argument("schemes", nargs=2, choices=SCHEMES)
    p_cmp.add_argument("--out", help="comparison CSV path")

    p_cases = sub.add_parser("cases", help="builtin cases")
    cases_sub = p_cases.add_subparsers(dest="cases_command", required=True)
    cases_sub.add_parser("list", help="list builtin cases")
    p_show = cases_sub.add_parser("show", help="print a builtin case as YAML")
    p_show.add_argument("name", choices=sorted(CASES))
    return ap


def load_scenario(args: argparse.Namespace) -> ScenarioConfig:
    config = builtin_case(args.case) if args.case else load_config(args.config)
    return apply_overrides(
        config,
        scheme=args.scheme, dt=args.dt, elements=args.elements, speed=args.speed,
        seed=args.seed, t_end=args.t_end, probes=args.probe,
        output=args.out if args.command == "run" else None,
    )


# ============================================================================
# COMMANDS
# ============================================================================

def _print_table(table: pd.DataFrame) -> None:
    print(table.to_string(index=False))


def cmd_run(args: argparse.Namespace) -> None:
    config = load_scenario(args)
    result = simulate(config)
    for key, value in summarize_trace(result.trace, result.probes).items():
        print(f"{key:>32}: {value}")
    if config.output:
        write_result(result, config.output)
    if args.compare:
        _print_table(compare(config, *args.compare))


def cmd_sweep(args: argparse.Namespace) -> None:
    config = load_scenario(args)
    table = sweep_speed(config, args.speeds, workers=args.workers)
    _print_table(table)
    valid = table.dropna(subset=["max_abs_u"])
    if not valid.empty:
        peak = valid.loc[valid["max_abs_u"].idxmax()]
        print(f"peak midspan displacement at {peak['speed']:g} m/s "
              f"(predicted resonance {predicted_resonance_speed(config):.1f} m/s)")
    if args.out:
        write_table(table, args.out)


def cmd_converge(args: argparse.Namespace) -> None:
    config = load_scenario(args)
    table = convergence_study(config, args.elements_list, args.dt_list, workers=args.workers)
    _print_table(table)
    if args.out:
        write_table(table, args.out)


def cmd_compare(args: argparse.Namespace) -> None:
    config = load_scenario(args)
    table = compare(config, *args.schemes)
    _print_table(table)
    if args.out:
        write_table(table, args.out)


def cmd_cases(args: argparse.Namespace) -> None:
    if args.cases_command == "list":
        _print_table(list_cases())
    else:
        print(dump_config(builtin_case(args.name)), end="")


COMMANDS = {
    "run": cmd_run,
    "sweep": cmd_sweep,
    "converge": cmd_converge,
    "compare": cmd_compare,
    "cases": cmd_cases,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        COMMANDS[args.command](args)
    except VtsiError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
