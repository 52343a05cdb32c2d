"""
Batches of scenario runs: matched-seed strategy comparisons and
linear-vs-nonlinear solver agreement over loading levels.
"""
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional, Sequence

import numpy as np
import pandas as pd

from control.laws import STRATEGIES
from engine.simulation import Scenario, ScenarioResult, SimOptions, run
from model.feeder import Feeder
from solvers.injections import net_injections
from solvers.linear import solve_linear
from solvers.nonlinear import SweepOptions, residual, solve_nonlinear

logger = logging.getLogger(__name__)

COMPARE_COLUMNS = ["bus", "variability"] + [f"savfi_{s}" for s in STRATEGIES]
AGREEMENT_COLUMNS = ["loading", "max_abs_error", "residual", "converged"]


def default_jobs() -> int:
    return os.cpu_count() or 1


def _run_one(args):
    scenario, options = args
    return run(scenario, options)


def run_many(
    scenarios: Sequence[Scenario],
    options: Optional[SimOptions] = None,
    jobs: Optional[int] = None,
) -> List[ScenarioResult]:
    """
    Run independent scenarios, in worker processes when `jobs` > 1.
    Results come back in input order whatever the completion order.
    """
    jobs = default_jobs() if jobs is None else jobs
    if jobs < 1:
        raise ValueError("jobs must be at least 1")
    work = [(s, options) for s in scenarios]
    if jobs == 1 or len(work) <= 1:
        return [_run_one(w) for w in work]
    with ProcessPoolExecutor(max_workers=min(jobs, len(work))) as pool:
        return list(pool.map(_run_one, work))


@dataclass
class Comparison:
    # bus, variability, savfi_none, savfi_thevenin, savfi_pfm (pu, mean over phases, windows and seeds)
    table: pd.DataFrame
    # share of (seed, bus, phase, window) cells with pfm <= thevenin <= none, in percent
    ordering_pct: float
    cells: int


def compare(
    base: Scenario,
    variabilities: Iterable[float],
    seeds: Iterable[int],
    buses: Optional[Sequence[str]] = None,
    options: Optional[SimOptions] = None,
    jobs: Optional[int] = None,
) -> Comparison:
    """
    Run every strategy at every (variability, seed) pair with matched PV
    realizations and tabulate SAVFI per bus. `buses` defaults to the PV buses
    below the substation.
    """
    feeder = base.feeder
    if buses is None:
        buses = [b for b in feeder.pv_buses() if b != feeder.root]
    for bus in buses:
        feeder.bus(bus)

    keys = []
    scenarios = []
    for variability in variabilities:
        for seed in seeds:
            spec = replace(base.pv_spec, variability=float(variability), seed=int(seed))
            for strategy in STRATEGIES:
                keys.append((float(variability), int(seed), strategy))
                scenarios.append(
                    replace(base, control=strategy, pv_spec=spec, name=f"{base.name}-{strategy}-v{variability}-s{seed}")
                )
    results = run_many(scenarios, options, jobs)
    tables = {key: res.savfi_table() for key, res in zip(keys, results)}

    rows = []
    satisfied = 0
    cells = 0
    for variability in sorted({k[0] for k in keys}):
        seeds_here = sorted({k[1] for k in keys if k[0] == variability})
        per_strategy = {s: [] for s in STRATEGIES}
        for seed in seeds_here:
            frames = {s: tables[(variability, seed, s)] for s in STRATEGIES}
            mask = frames["none"]["bus"].isin(buses).to_numpy()
            vals = {s: frames[s]["savfi"].to_numpy(dtype=float)[mask] for s in STRATEGIES}
            ok = (vals["pfm"] <= vals["thevenin"]) & (vals["thevenin"] <= vals["none"])
            satisfied += int(ok.sum())
            cells += int(ok.size)
            for s in STRATEGIES:
                per_strategy[s].append(frames[s][mask])
        merged = {s: pd.concat(per_strategy[s]).groupby("bus")["savfi"].mean() for s in STRATEGIES}
        for bus in buses:
            row = {"bus": bus, "variability": variability}
            for s in STRATEGIES:
                row[f"savfi_{s}"] = float(merged[s].get(bus, np.nan))
            rows.append(row)

    pct = 100.0 * satisfied / cells if cells else float("nan")
    logger.info("comparison on %s: %d cells, ordering satisfied in %.1f%%", feeder.name, cells, pct)
    return Comparison(table=pd.DataFrame(rows, columns=COMPARE_COLUMNS), ordering_pct=pct, cells=cells)


def solver_agreement(
    feeder: Feeder,
    loadings: Iterable[float],
    v_substation: Optional[float] = None,
    options: Optional[SweepOptions] = None,
) -> pd.DataFrame:
    """
    For each load multiplier (PV off), max |V_lin - V_nl| over all
    node-phases and the exact-equation residual of the nonlinear solve.
    """
    rows = []
    for loading in loadings:
        injections = net_injections(feeder, load_scale=float(loading))
        lin = solve_linear(feeder, injections, v_substation=v_substation)
        sol = solve_nonlinear(feeder, injections, v_substation=v_substation, options=options)
        error = float(np.max(np.abs(lin.magnitudes() - sol.magnitudes())))
        rows.append(
            {
                "loading": float(loading),
                "max_abs_error": error,
                "residual": residual(feeder, sol, injections),
                "converged": bool(sol.converged),
            }
        )
        logger.debug("loading %.2f: max error %.3g pu, converged=%s", loading, error, sol.converged)
    return pd.DataFrame(rows, columns=AGREEMENT_COLUMNS)
