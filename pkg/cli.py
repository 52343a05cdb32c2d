"""
Command-line entry point.

    python cli.py run --feeder twobus.json --control pfm --variability 0.3 --steps 120 --start-min 660
    python cli.py compare --feeder tree25_pv.json --variability 0.3 0.7 --seeds 1 2 3
    python cli.py validate --feeder chain5.json --loading 0.5 1 3

Exit codes: 0 ok, 1 solver disagreement (validate), 2 bad input, 3 degraded run.
"""
import argparse
import logging
import os
import sys
from dataclasses import asdict, replace
from pathlib import Path
from typing import List, Optional

from control.laws import STRATEGIES
from engine.scenarios import DEFAULT_HORIZON, DEFAULT_START_MIN, VIOLATION_KINDS, make_violation_scenario
from engine.simulation import MEASUREMENT_MODES, Scenario, SimOptions, run
from engine.sweep import compare, default_jobs, solver_agreement
from generators.pv_profiles import PvProfileSpec
from generators.report_tables import format_table, scaled_comparison, summary_table
from generators.results_writer import write_results
from metrics.fluctuation import SAVFI_SCALE, SAVFI_WINDOW
from model.errors import ScenarioError
from model.feeder import Feeder
from parsers.feeder_parser import load_feeder
from parsers.profile_parser import load_profiles
from utils.helpers import stable_hash
from utils.logging_setup import LOG_ENV_VAR, setup_logging

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_DISAGREE = 1
EXIT_USAGE = 2
EXIT_DEGRADED = 3

FEEDER_DIR = Path(__file__).resolve().parent / "feeders"
DAY_STEPS = 1440


def resolve_feeder_path(raw: str) -> Path:
    """A path as given, else a file of that name among the bundled feeders."""
    path = Path(raw)
    if path.exists():
        return path
    bundled = FEEDER_DIR / path.name
    if bundled.exists():
        return bundled
    if not path.suffix and (FEEDER_DIR / f"{path.name}.json").exists():
        return FEEDER_DIR / f"{path.name}.json"
    return path


def _feeder(raw: str) -> Feeder:
    return load_feeder(resolve_feeder_path(raw))


def _sim_options(args) -> SimOptions:
    return SimOptions(
        measurement_mode=args.measurement,
        window=args.window,
        include_load_deltas=args.include_load_deltas,
    )


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--feeder", required=True, help="feeder JSON path or bundled feeder name")
    p.add_argument(
        "--v-substation", type=float, default=None, help="substation voltage (pu); feeder file value if omitted"
    )
    p.add_argument("--log-level", default=None, help=f"log level; overrides {LOG_ENV_VAR}")


def _add_sim(p: argparse.ArgumentParser, steps_default: Optional[int], start_default: Optional[float]) -> None:
    p.add_argument(
        "--steps",
        type=int,
        default=steps_default,
        help="number of 1-min steps (run: a full day, or the preset window with --scenario)",
    )
    p.add_argument(
        "--start-min",
        type=float,
        default=start_default,
        help="time of day of the first step in minutes (run: 0, or the preset start with --scenario)",
    )
    p.add_argument("--measurement", choices=MEASUREMENT_MODES, default="lagged", help="inverter measurement timing")
    p.add_argument(
        "--include-load-deltas",
        action="store_true",
        help="count load changes at the inverter bus in its measured injection change",
    )
    p.add_argument("--window", type=int, default=SAVFI_WINDOW, help="SAVFI window (steps)")
    p.add_argument("--correlated-pv", action="store_true", help="one noise realization shared by every PV unit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gridflux",
        description="Quasi-static feeder simulation with local inverter var control.",
        formatter_class=argparse.ArgumentDefaultsHelpFormatter,
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p_run = sub.add_parser("run", help="run one scenario and write result files", formatter_class=fmt)
    _add_common(p_run)
    _add_sim(p_run, None, None)
    p_run.add_argument("--control", choices=STRATEGIES, default="none", help="inverter control strategy")
    p_run.add_argument("--variability", type=float, default=0.0, help="PV variability fraction (three-sigma)")
    p_run.add_argument("--seed", type=int, default=0, help="PV noise seed")
    p_run.add_argument("--out", default="out", help="output root; files go to <out>/<inputs hash>/")
    p_run.add_argument(
        "--scenario",
        choices=VIOLATION_KINDS,
        default=None,
        help=f"violation preset (a {DEFAULT_HORIZON}-step window from minute {DEFAULT_START_MIN} unless set)",
    )
    p_run.add_argument("--loads", default=None, help="load profile CSV (t_min,load|<bus>...)")
    p_run.add_argument("--pv-profile", default=None, help="normalized PV profile CSV (t_min,pv|<unit>...)")
    p_run.add_argument("--allow-degraded", action="store_true", help="exit 0 even if some steps did not converge")
    p_run.set_defaults(func=cmd_run)

    p_cmp = sub.add_parser("compare", help="matched-seed SAVFI comparison of all strategies", formatter_class=fmt)
    _add_common(p_cmp)
    _add_sim(p_cmp, 120, 660.0)
    p_cmp.add_argument("--variability", type=float, nargs="+", default=[0.3], help="variability levels")
    p_cmp.add_argument("--seeds", type=int, nargs="+", default=[0], help="matched PV seeds")
    p_cmp.add_argument("--buses", nargs="+", default=None, help="buses to report (PV buses if omitted)")
    p_cmp.add_argument("--jobs", type=int, default=default_jobs(), help="worker processes")
    p_cmp.add_argument("--out", default=None, help="also write comparison.csv under <out>/<inputs hash>/")
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="linear vs nonlinear solver agreement", formatter_class=fmt)
    _add_common(p_val)
    p_val.add_argument("--loading", type=float, nargs="+", default=[0.0, 0.5, 1.0], help="load multipliers")
    p_val.add_argument("--tol", type=float, default=0.01, help="allowed max |V_lin - V_nl| (pu)")
    p_val.set_defaults(func=cmd_validate)
    return parser


def _build_scenario(args, feeder: Feeder) -> Scenario:
    spec = PvProfileSpec(variability=args.variability, seed=args.seed)
    if args.scenario:
        scenario = make_violation_scenario(
            feeder,
            args.scenario,
            horizon=args.steps or DEFAULT_HORIZON,
            start_min=DEFAULT_START_MIN if args.start_min is None else args.start_min,
            v_substation=args.v_substation,
            pv_spec=spec,
        )
        return replace(scenario, control=args.control)

    return Scenario(
        feeder=feeder,
        control=args.control,
        horizon=args.steps or DAY_STEPS,
        start_min=args.start_min or 0.0,
        pv_spec=spec,
        pv_profile=load_profiles(args.pv_profile, kind="pv") if args.pv_profile else None,
        load_profile=load_profiles(args.loads, kind="load") if args.loads else None,
        v_substation=args.v_substation,
        correlated_pv=args.correlated_pv,
        name=feeder.name,
    )


def cmd_run(args) -> int:
    feeder = _feeder(args.feeder)
    scenario = _build_scenario(args, feeder)
    options = _sim_options(args)
    result = run(scenario, options)

    inputs_hash = stable_hash({"scenario": scenario.describe(), "options": asdict(options)})
    directory = os.path.join(args.out, inputs_hash)
    write_results(result, directory, extra_meta={"inputs_hash": inputs_hash})

    print(f"{scenario.name}: {scenario.horizon} steps, control={scenario.control}, out={directory}")
    print(f"savfi in units of {SAVFI_SCALE:g} pu; {result.violation_count()} band violations")
    print(format_table(summary_table(result)))

    if result.degraded:
        print(f"degraded steps: {', '.join(str(k) for k in result.degraded_steps)}", file=sys.stderr)
        if not args.allow_degraded:
            return EXIT_DEGRADED
    return EXIT_OK


def cmd_compare(args) -> int:
    feeder = _feeder(args.feeder)
    base = Scenario(
        feeder=feeder,
        horizon=args.steps,
        start_min=args.start_min,
        v_substation=args.v_substation,
        correlated_pv=args.correlated_pv,
        name=feeder.name,
    )
    base.validate()
    options = _sim_options(args)
    report = compare(base, args.variability, args.seeds, buses=args.buses, options=options, jobs=args.jobs)
    table = scaled_comparison(report.table)

    print(f"savfi in units of {SAVFI_SCALE:g} pu")
    print(format_table(table))
    print(f"ordering pfm <= thevenin <= none: {report.ordering_pct:.1f}% of {report.cells} cells")

    if args.out:
        inputs_hash = stable_hash(
            {
                "scenario": base.describe(),
                "options": asdict(options),
                "variability": list(args.variability),
                "seeds": list(args.seeds),
                "buses": args.buses,
            }
        )
        directory = os.path.join(args.out, inputs_hash)
        os.makedirs(directory, exist_ok=True)
        table.to_csv(os.path.join(directory, "comparison.csv"), index=False, float_format="%.6f", lineterminator="\n")
    return EXIT_OK


def cmd_validate(args) -> int:
    feeder = _feeder(args.feeder)
    table = solver_agreement(feeder, args.loading, v_substation=args.v_substation)
    print(format_table(table, digits=6))
    bad = table[(table["max_abs_error"] > args.tol) | ~table["converged"]]
    if len(bad):
        print(
            f"linear model exceeds {args.tol:g} pu at loading {', '.join(f'{x:g}' for x in bad['loading'])}",
            file=sys.stderr,
        )
        return EXIT_DISAGREE
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    setup_logging(args.log_level)
    try:
        return args.func(args)
    except (ScenarioError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
