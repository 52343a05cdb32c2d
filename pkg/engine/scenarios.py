"""
Forecast-error events that push a feeder outside the ANSI band.

overvoltage   light load; PV sits at a forecast fraction of clear sky before
              and after the event and jumps to full active rating during it.
undervoltage  heavy load; PV follows clear sky and collapses to a fraction
              of it during the event.

Load (and for overvoltage the forecast fraction) is searched with static
uncontrolled solves until the event state violates the band while the
pre-event state sits inside it with a margin.
"""
import logging
from typing import Iterator, Optional, Tuple

import numpy as np
import pandas as pd

from generators.pv_profiles import PvProfileSpec, clear_sky, realize_pv_injections
from metrics.fluctuation import VoltageBand
from model.errors import ScenarioError
from model.feeder import Feeder
from engine.simulation import PV_COLUMN, Scenario
from solvers.injections import net_injections
from solvers.nonlinear import SweepOptions, solve_nonlinear

logger = logging.getLogger(__name__)

VIOLATION_KINDS = ("overvoltage", "undervoltage")
MAX_SEARCH_SOLVES = 20
PRE_EVENT_MARGIN = 0.005
DEFAULT_START_MIN = 690
DEFAULT_HORIZON = 60

OVERVOLTAGE_LOADS = (0.3, 0.2, 0.1, 0.0)
FORECAST_FRACTIONS = (0.0, 0.25, 0.5)
UNDERVOLTAGE_LOAD_START = 1.2
UNDERVOLTAGE_LOAD_STEP = 0.1
UNDERVOLTAGE_PV_LEVEL = 0.2


class _SolveBudget:
    """Static uncontrolled solves with a hard budget."""

    def __init__(self, feeder: Feeder, v_substation: Optional[float], budget: int):
        self.feeder = feeder
        self.v_substation = v_substation
        self.budget = budget
        self.used = 0

    def extremes(self, load_scale: float, pv_level: float) -> Tuple[float, float]:
        if self.used >= self.budget:
            raise ScenarioError(
                f"could not drive {self.feeder.name} to a violation within {self.budget} power-flow solves"
            )
        self.used += 1
        p_kw = realize_pv_injections(self.feeder, pv_level, 0.0)
        sol = solve_nonlinear(
            self.feeder,
            net_injections(self.feeder, load_scale=load_scale, pv_p_kw=p_kw),
            v_substation=self.v_substation,
            options=SweepOptions(warm_start=False),
        )
        mags = sol.magnitudes()
        logger.debug(
            "solve %d: load %.2f pv %.2f -> |V| in [%.4f, %.4f]",
            self.used,
            load_scale,
            pv_level,
            mags.min(),
            mags.max(),
        )
        if not sol.converged:
            return 0.0, 0.0
        return float(mags.min()), float(mags.max())


def _inside(extremes: Tuple[float, float], band: VoltageBand) -> bool:
    low, high = extremes
    return low >= band.low + PRE_EVENT_MARGIN and high <= band.high - PRE_EVENT_MARGIN


def _event_mask(horizon: int) -> np.ndarray:
    edge = max(1, horizon // 6)
    mask = np.zeros(horizon, dtype=bool)
    mask[edge : horizon - edge] = True
    return mask


def _undervoltage_loads() -> Iterator[float]:
    k = 0
    while True:
        yield round(UNDERVOLTAGE_LOAD_START + k * UNDERVOLTAGE_LOAD_STEP, 6)
        k += 1


def make_violation_scenario(
    feeder: Feeder,
    kind: str,
    horizon: int = DEFAULT_HORIZON,
    start_min: float = DEFAULT_START_MIN,
    v_substation: Optional[float] = None,
    band: VoltageBand = VoltageBand(),
    pv_spec: PvProfileSpec = PvProfileSpec(),
) -> Scenario:
    """
    Build an uncontrolled scenario whose event drives the feeder outside
    `band`. Switch strategies with `dataclasses.replace(scenario, control=...)`.

    Raises ScenarioError when the bounded search finds no such operating point.
    """
    if kind not in VIOLATION_KINDS:
        raise ScenarioError(f"unknown violation kind {kind!r}; expected one of {', '.join(VIOLATION_KINDS)}")
    if horizon < 6:
        raise ScenarioError("violation scenarios need at least 6 steps")
    if not feeder.pv_units:
        raise ScenarioError(f"{feeder.name} has no PV units to create an event with")

    grid = start_min + pv_spec.step_min * np.arange(horizon, dtype=float)
    cs = clear_sky(pv_spec).reindex(grid).to_numpy()
    if np.isnan(cs).any() or cs.min() <= 0:
        raise ScenarioError("violation window must lie between sunrise and sunset")
    event = _event_mask(horizon)
    search = _SolveBudget(feeder, v_substation, MAX_SEARCH_SOLVES)

    chosen = None
    if kind == "overvoltage":
        for load_scale in OVERVOLTAGE_LOADS:
            if search.extremes(load_scale, 1.0)[1] <= band.high:
                continue
            for fraction in FORECAST_FRACTIONS:
                if _inside(search.extremes(load_scale, fraction * cs.max()), band):
                    chosen = load_scale
                    series = np.where(event, 1.0, fraction * cs)
                    break
            if chosen is not None:
                break
    else:
        for load_scale in _undervoltage_loads():
            if search.extremes(load_scale, UNDERVOLTAGE_PV_LEVEL * cs.min())[0] >= band.low:
                continue
            if _inside(search.extremes(load_scale, cs.min()), band):
                chosen = load_scale
                series = np.where(event, UNDERVOLTAGE_PV_LEVEL * cs, cs)
            break

    if chosen is None:
        raise ScenarioError(
            f"no {kind} event on {feeder.name} keeps the pre-event state inside the band "
            f"({search.used} power-flow solves tried)"
        )

    logger.info("%s scenario on %s: load scale %.2f after %d solves", kind, feeder.name, chosen, search.used)
    return Scenario(
        feeder=feeder,
        control="none",
        horizon=horizon,
        start_min=start_min,
        pv_spec=pv_spec,
        pv_profile=pd.DataFrame({PV_COLUMN: series}, index=pd.Index(grid, name="t_min")),
        load_scale=chosen,
        v_substation=v_substation,
        preset=kind,
        name=f"{feeder.name}-{kind}",
    )
