"""
Quasi-static closed-loop simulation at a fixed step (1 min by default).

Each step realizes PV output and loads, lets every inverter read its local
sensors and update its var set-point, and solves the nonlinear power flow.

Two measurement timings are supported:

lagged   (default) one dispatch per step from the deltas between the final
         solves of the two previous steps (zero deltas at steps 0 and 1).
         Dispatch at step t depends only on solves before t.
settled  inverters see their own PV change at the terminals immediately;
         child-line sensors are re-read after each solve and every
         inverter re-dispatches from the same snapshot until no set-point
         moves by more than `settle_tol_kvar`. Deltas are always taken
         against the final solve of the previous step.

Under minute-scale PV noise the one-step lag makes the lagged mode react to
stale changes, so it can raise SAVFI above the uncontrolled case. Use
settled to see what the control laws achieve without that delay.
"""
import logging
import time
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd

from control import laws
from control.laws import STRATEGIES, LocalMeasurement, TheveninImpedance, thevenin_impedance
from generators.pv_profiles import PvProfileSpec, unit_series
from metrics.fluctuation import SAVFI_WINDOW, VoltageBand, savfi_table, violation_table, violations
from model.errors import ScenarioError
from model.feeder import Feeder, Phase
from parsers.feeder_parser import dump_feeder
from solvers.injections import load_vector_kw, pv_vector_kw
from solvers.network import NodePhase, build_index
from solvers.nonlinear import SweepOptions, solve_nonlinear
from utils.helpers import PACKAGE_VERSION

logger = logging.getLogger(__name__)

MEASUREMENT_MODES = ("lagged", "settled")
PRESETS = ("none", "overvoltage", "undervoltage")
PV_COLUMN = "pv"
LOAD_COLUMN = "load"


@dataclass(frozen=True)
class SimOptions:
    sweep: SweepOptions = SweepOptions()
    measurement_mode: str = "lagged"
    max_settle_rounds: int = 20
    settle_tol_kvar: float = 1e-3
    # count load changes at the bus as part of dp_inj
    include_load_deltas: bool = False
    window: int = SAVFI_WINDOW
    band: VoltageBand = VoltageBand()
    keep_phasors: bool = False

    def validate(self) -> None:
        self.sweep.validate()
        self.band.validate()
        if self.measurement_mode not in MEASUREMENT_MODES:
            raise ValueError(f"measurement_mode must be one of {MEASUREMENT_MODES}")
        if self.max_settle_rounds < 1:
            raise ValueError("max_settle_rounds must be at least 1")
        if not self.settle_tol_kvar > 0:
            raise ValueError("settle_tol_kvar must be positive")
        if self.window < 1:
            raise ValueError("window must be at least 1")


@dataclass(frozen=True, eq=False)
class Scenario:
    feeder: Feeder
    control: str = "none"
    horizon: int = 60
    # time of day of step 0
    start_min: float = 0.0
    pv_spec: PvProfileSpec = PvProfileSpec()
    # explicit normalized PV output indexed by t_min: column "pv" for every unit or one per unit id
    pv_profile: Optional[pd.DataFrame] = None
    # load multipliers indexed by t_min: column "load" for every bus or one per bus id
    load_profile: Optional[pd.DataFrame] = None
    load_scale: float = 1.0
    v_substation: Optional[float] = None
    correlated_pv: bool = False
    preset: str = "none"
    name: str = "scenario"

    @property
    def seed(self) -> int:
        return self.pv_spec.seed

    @property
    def step_min(self) -> int:
        return self.pv_spec.step_min

    def substation_voltage(self) -> float:
        return self.feeder.v_substation if self.v_substation is None else self.v_substation

    def time_grid(self) -> np.ndarray:
        return self.start_min + self.step_min * np.arange(self.horizon, dtype=float)

    def validate(self) -> None:
        if self.control not in STRATEGIES:
            raise ScenarioError(f"unknown control {self.control!r}; expected one of {', '.join(STRATEGIES)}")
        if self.preset not in PRESETS:
            raise ScenarioError(f"unknown preset {self.preset!r}; expected one of {', '.join(PRESETS)}")
        if self.horizon < 2:
            raise ScenarioError("horizon must be at least 2 steps")
        if self.load_scale < 0:
            raise ScenarioError("load_scale must be non-negative")
        try:
            self.pv_spec.validate()
        except ValueError as exc:
            raise ScenarioError(str(exc)) from None
        if self.pv_profile is None and self.time_grid()[-1] >= self.pv_spec.day_length_min:
            raise ScenarioError("horizon runs past the end of the PV day")
        # both raise ScenarioError on gaps or unknown columns
        self.pv_series()
        self.load_multipliers()

    def pv_series(self) -> pd.DataFrame:
        """Normalized PV output, one row per step, one column per unit id."""
        grid = self.time_grid()
        ids = sorted(u.id for u in self.feeder.pv_units)
        if self.pv_profile is None:
            return unit_series(self.pv_spec, ids, correlated=self.correlated_pv).reindex(grid)
        table = _covering(self.pv_profile, grid, "PV")
        columns = {}
        for uid in ids:
            if uid in table.columns:
                columns[uid] = table[uid].to_numpy()
            elif PV_COLUMN in table.columns:
                columns[uid] = table[PV_COLUMN].to_numpy()
            else:
                raise ScenarioError(f"PV profile has no column for unit {uid!r} and no {PV_COLUMN!r} column")
        return pd.DataFrame(columns, index=pd.Index(grid, name="t_min"), columns=ids)

    def load_multipliers(self) -> pd.DataFrame:
        grid = self.time_grid()
        ids = sorted(self.feeder.buses)
        if self.load_profile is None:
            return pd.DataFrame(self.load_scale, index=pd.Index(grid, name="t_min"), columns=ids)
        table = _covering(self.load_profile, grid, "load")
        unknown = sorted(set(table.columns) - set(ids) - {LOAD_COLUMN})
        if unknown:
            raise ScenarioError(f"load profile names unknown bus {unknown[0]!r}")
        default = table[LOAD_COLUMN].to_numpy() if LOAD_COLUMN in table.columns else np.ones(len(grid))
        columns = {b: (table[b].to_numpy() if b in table.columns else default) * self.load_scale for b in ids}
        return pd.DataFrame(columns, index=pd.Index(grid, name="t_min"), columns=ids)

    def describe(self) -> Dict[str, Any]:
        """Deterministic description of every input; used for hashing and meta.json."""
        def frame(table):
            if table is None:
                return None
            return {"index": table.index.tolist(), "columns": {c: table[c].tolist() for c in table.columns}}

        return {
            "name": self.name,
            "feeder": dump_feeder(self.feeder),
            "control": self.control,
            "horizon": self.horizon,
            "start_min": self.start_min,
            "pv_spec": asdict(self.pv_spec),
            "pv_profile": frame(self.pv_profile),
            "load_profile": frame(self.load_profile),
            "load_scale": self.load_scale,
            "v_substation": self.substation_voltage(),
            "correlated_pv": self.correlated_pv,
            "preset": self.preset,
        }


def _covering(table, grid, what):
    out = table.reindex(grid)
    if out.isna().any().any():
        raise ScenarioError(f"{what} profile does not cover the scenario horizon")
    return out


@dataclass(frozen=True)
class _Inverter:
    unit: str
    bus: str
    phase: Phase
    node: int
    rating_kva: float
    thevenin: TheveninImpedance
    segment_z: complex
    children: Tuple[str, ...]
    enabled: bool


@dataclass(eq=False)
class ScenarioResult:
    scenario: Scenario
    options: SimOptions
    t_min: np.ndarray
    node_phases: Tuple[NodePhase, ...]
    # (steps, node-phases)
    v_mag: np.ndarray
    p_inj_kw: np.ndarray
    q_inj_kvar: np.ndarray
    iterations: np.ndarray
    dispatch_log: pd.DataFrame
    measurement_log: pd.DataFrame
    degraded_steps: List[int] = field(default_factory=list)
    phasors: Optional[np.ndarray] = None
    metadata: Dict[str, Any] = field(default_factory=dict)

    @property
    def degraded(self) -> bool:
        return bool(self.degraded_steps)

    def voltage_frame(self) -> pd.DataFrame:
        columns = pd.MultiIndex.from_tuples([(b, p.name) for b, p in self.node_phases], names=["bus", "phase"])
        return pd.DataFrame(self.v_mag, index=pd.Index(self.t_min, name="t_min"), columns=columns)

    def savfi_table(self, window: Optional[int] = None) -> pd.DataFrame:
        return savfi_table(self.voltage_frame(), window or self.options.window)

    def violation_table(self, band: Optional[VoltageBand] = None) -> pd.DataFrame:
        return violation_table(self.voltage_frame(), band or self.options.band)

    def violation_count(self, band: Optional[VoltageBand] = None) -> int:
        return violations(self.v_mag, band or self.options.band).count

    def bus_savfi(self, buses: Optional[List[str]] = None) -> pd.Series:
        """Mean SAVFI (pu) per bus over its phases and windows."""
        table = self.savfi_table()
        if buses is not None:
            table = table[table["bus"].isin(buses)]
        return table.groupby("bus")["savfi"].mean()

    def results_frame(self) -> pd.DataFrame:
        """Long table `t_min,bus,phase,v_pu,p_inj_kw,q_inj_kvar,flag_violation`."""
        steps, n = self.v_mag.shape if self.v_mag.ndim == 2 else (0, len(self.node_phases))
        band = self.options.band
        flags = (self.v_mag > band.high) | (self.v_mag < band.low)
        return pd.DataFrame(
            {
                "t_min": _integral(np.repeat(self.t_min, n)),
                "bus": np.tile([b for b, _ in self.node_phases], steps),
                "phase": np.tile([p.name for _, p in self.node_phases], steps),
                "v_pu": self.v_mag.reshape(-1),
                "p_inj_kw": self.p_inj_kw.reshape(-1),
                "q_inj_kvar": self.q_inj_kvar.reshape(-1),
                "flag_violation": flags.reshape(-1).astype(int),
            },
            columns=["t_min", "bus", "phase", "v_pu", "p_inj_kw", "q_inj_kvar", "flag_violation"],
        )


def _integral(values):
    values = np.asarray(values, dtype=float)
    if values.size and np.all(values == np.round(values)):
        return values.astype(np.int64)
    return values


def _inverters(feeder, index):
    out = []
    for unit in feeder.pv_units:
        parent = feeder.parent_segment(unit.bus)
        for phase in unit.phases:
            out.append(
                _Inverter(
                    unit=unit.id,
                    bus=unit.bus,
                    phase=phase,
                    node=index.node(unit.bus, phase),
                    rating_kva=unit.phase_rating_kva,
                    thevenin=thevenin_impedance(feeder, unit.bus, phase),
                    segment_z=parent.diagonal(phase) if parent is not None else 0j,
                    children=tuple(feeder.children(unit.bus)),
                    enabled=unit.bus != feeder.root,
                )
            )
    return sorted(out, key=lambda inv: (inv.unit, inv.phase))


class _Loop:
    """Mutable per-run state; one instance per `run` call."""

    def __init__(self, scenario, options):
        self.scenario = scenario
        self.options = options
        self.feeder = scenario.feeder
        self.index = build_index(self.feeder)
        self.base = self.feeder.phase_base_kva
        self.v_sub = scenario.substation_voltage()
        self.inverters = _inverters(self.feeder, self.index)
        self.q = {(inv.unit, inv.phase): 0.0 for inv in self.inverters}
        self.warm = None
        self.load_nominal = load_vector_kw(self.index, 1.0)
        self.bus_pos = np.array([sorted(self.feeder.buses).index(b) for b, _ in self.index.node_phases], dtype=int)

    def consumption(self, multipliers):
        return self.load_nominal * multipliers[self.bus_pos]

    def solve(self, p_kw, q_kvar, cons_kw):
        inj_kw = pv_vector_kw(self.index, p_kw, q_kvar) - cons_kw
        sol = solve_nonlinear(
            self.feeder,
            inj_kw / self.base,
            v_substation=self.v_sub,
            options=self.options.sweep,
            v_init=self.warm if self.options.sweep.warm_start else None,
        )
        self.warm = sol.v if sol.converged else None
        return sol, inj_kw

    def flows_kw(self, sol):
        return sol.s_flow * self.base

    def measure(self, inv, flows_now, flows_prev, dp, p_now):
        deltas = {}
        for child in inv.children:
            pos = self.index.seg_pos.get((child, inv.phase))
            if pos is None:
                deltas[child] = (0.0, 0.0)
            else:
                d = flows_now[pos] - flows_prev[pos]
                deltas[child] = (float(d.real), float(d.imag))
        return LocalMeasurement(bus=inv.bus, phase=inv.phase, dp_inj=dp, child_flow_deltas=deltas, p_inj_now=p_now)

    def dispatch(self, inv, measurement, prev_q):
        if self.scenario.control == "thevenin":
            return laws.thevenin_dispatch(measurement, inv.thevenin, prev_q, inv.rating_kva)
        return laws.pfm_dispatch(measurement, inv.segment_z, prev_q, inv.rating_kva)


def run(scenario: Scenario, options: Optional[SimOptions] = None) -> ScenarioResult:
    """
    Simulate `scenario` step by step. Deterministic given the scenario and
    its seed. Steps whose power flow did not converge are kept and listed in
    `degraded_steps`.
    """
    options = options or SimOptions()
    options.validate()
    scenario.validate()
    started = time.perf_counter()

    loop = _Loop(scenario, options)
    index = loop.index
    grid = scenario.time_grid()
    pv = scenario.pv_series()
    mult = scenario.load_multipliers().to_numpy()
    active = [inv for inv in loop.inverters if inv.enabled] if scenario.control != "none" else []
    lagged = options.measurement_mode == "lagged"

    steps = scenario.horizon
    v_mag = np.zeros((steps, index.n_nodes))
    p_rec = np.zeros_like(v_mag)
    q_rec = np.zeros_like(v_mag)
    iterations = np.zeros(steps, dtype=int)
    phasors = np.zeros((steps, index.n_nodes), dtype=complex) if options.keep_phasors else None
    dispatch_rows = []
    measure_rows = []
    degraded = []

    # history[-1] is the previous step: (p_kw, consumption, flows)
    history = []

    for k, t in enumerate(grid):
        p_now = {}
        for inv in loop.inverters:
            p_now[(inv.unit, inv.phase)] = scenario.feeder.pv_unit(inv.unit).phase_p_rated_kw * float(
                pv.iat[k, pv.columns.get_loc(inv.unit)]
            )
        cons = loop.consumption(mult[k])
        last = {}

        if lagged:
            if active and len(history) >= 2:
                (p1, c1, f1), (p2, c2, f2) = history[-1], history[-2]
                for inv in active:
                    key = (inv.unit, inv.phase)
                    dp = p1[key] - p2[key]
                    if options.include_load_deltas:
                        dp -= float((c1[inv.node] - c2[inv.node]).real)
                    m = loop.measure(inv, f1, f2, dp, p_now[key])
                    d = loop.dispatch(inv, m, loop.q[key])
                    loop.q[key] = d.q_setpoint
                    last[key] = (m, d)
            sol, inj = loop.solve(p_now, loop.q, cons)
        else:
            sol, inj = loop.solve(p_now, loop.q, cons)
            if active and history:
                p1, c1, f1 = history[-1]
                q_round = dict(loop.q)
                for _ in range(options.max_settle_rounds):
                    flows = loop.flows_kw(sol)
                    q_new = {}
                    for inv in active:
                        key = (inv.unit, inv.phase)
                        dp = p_now[key] - p1[key]
                        if options.include_load_deltas:
                            dp -= float((cons[inv.node] - c1[inv.node]).real)
                        m = loop.measure(inv, flows, f1, dp, p_now[key])
                        d = loop.dispatch(inv, m, loop.q[key])
                        q_new[key] = d.q_setpoint
                        last[key] = (m, d)
                    moved = max(abs(q_new[key] - q_round[key]) for key in q_new)
                    if moved <= options.settle_tol_kvar:
                        break
                    q_round.update(q_new)
                    sol, inj = loop.solve(p_now, q_round, cons)
                else:
                    logger.debug("step %d: set-points still moving after %d rounds", k, options.max_settle_rounds)
                loop.q = q_round

        if not sol.converged:
            degraded.append(k)
            logger.warning(
                "step %d (t=%.0f min) degraded: converged=%s collapsed=%s", k, t, sol.converged, sol.collapsed
            )

        v_mag[k] = sol.magnitudes()
        p_rec[k] = inj.real
        q_rec[k] = inj.imag
        iterations[k] = sol.iterations
        if phasors is not None:
            phasors[k] = sol.v

        for inv in loop.inverters:
            key = (inv.unit, inv.phase)
            m, d = last.get(key, (None, None))
            dispatch_rows.append(
                {
                    "t_min": t,
                    "unit": inv.unit,
                    "bus": inv.bus,
                    "phase": inv.phase.name,
                    "p_kw": p_now[key],
                    "q_kvar": loop.q[key],
                    "requested_kvar": d.requested if d is not None else loop.q[key],
                    "clipped": bool(d.clipped) if d is not None else False,
                }
            )
            if m is not None:
                measure_rows.append(
                    {
                        "t_min": t,
                        "unit": inv.unit,
                        "bus": inv.bus,
                        "phase": inv.phase.name,
                        "dp_inj_kw": m.dp_inj,
                        "child_dp_kw": sum(v[0] for v in m.child_flow_deltas.values()),
                        "child_dq_kvar": sum(v[1] for v in m.child_flow_deltas.values()),
                    }
                )

        history.append((p_now, cons, loop.flows_kw(sol)))
        if len(history) > 2:
            history.pop(0)

    elapsed = time.perf_counter() - started
    logger.info(
        "scenario %s (%s, %d steps) finished in %.2fs, %d degraded steps",
        scenario.name,
        scenario.control,
        steps,
        elapsed,
        len(degraded),
    )

    metadata = {
        "scenario": scenario.name,
        "feeder": scenario.feeder.name,
        "control": scenario.control,
        "seed": scenario.seed,
        "variability": scenario.pv_spec.variability,
        "horizon": steps,
        "start_min": scenario.start_min,
        "preset": scenario.preset,
        "measurement_mode": options.measurement_mode,
        "degraded_steps": list(degraded),
        "versions": {"gridflux": PACKAGE_VERSION, "numpy": np.__version__, "pandas": pd.__version__},
    }
    return ScenarioResult(
        scenario=scenario,
        options=options,
        t_min=grid,
        node_phases=index.node_phases,
        v_mag=v_mag,
        p_inj_kw=p_rec,
        q_inj_kvar=q_rec,
        iterations=iterations,
        dispatch_log=pd.DataFrame(
            dispatch_rows, columns=["t_min", "unit", "bus", "phase", "p_kw", "q_kvar", "requested_kvar", "clipped"]
        ),
        measurement_log=pd.DataFrame(
            measure_rows, columns=["t_min", "unit", "bus", "phase", "dp_inj_kw", "child_dp_kw", "child_dq_kvar"]
        ),
        degraded_steps=degraded,
        phasors=phasors,
        metadata=metadata,
    )
