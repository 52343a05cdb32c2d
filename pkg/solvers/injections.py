from typing import Dict, Mapping, Optional, Tuple, Union

import numpy as np

from model.feeder import Feeder, Phase
from solvers.network import NodePhase, PhaseIndex, build_index

UnitPhase = Tuple[str, Phase]


def load_vector_kw(index: PhaseIndex, multipliers: Union[float, Mapping[str, float]] = 1.0) -> np.ndarray:
    """
    Constant-power consumption (kW + j kvar) per node-phase. `multipliers`
    is one scale for every bus or a per-bus mapping (missing buses use 1.0).
    """
    feeder = index.feeder
    out = np.zeros(index.n_nodes, dtype=complex)
    for i, (bus_id, phase) in enumerate(index.node_phases):
        if isinstance(multipliers, Mapping):
            scale = float(multipliers.get(bus_id, 1.0))
        else:
            scale = float(multipliers)
        out[i] = feeder.buses[bus_id].load_on(phase) * scale
    return out


def pv_vector_kw(
    index: PhaseIndex,
    p_kw: Mapping[UnitPhase, float],
    q_kvar: Optional[Mapping[UnitPhase, float]] = None,
) -> np.ndarray:
    """Inverter output (kW + j kvar) per node-phase, keyed by (unit id, phase)."""
    feeder = index.feeder
    bus_of = {u.id: u.bus for u in feeder.pv_units}
    out = np.zeros(index.n_nodes, dtype=complex)
    for (unit_id, phase), p in p_kw.items():
        out[index.node(bus_of[unit_id], phase)] += p
    for (unit_id, phase), q in (q_kvar or {}).items():
        out[index.node(bus_of[unit_id], phase)] += 1j * q
    return out


def net_injections(
    feeder: Feeder,
    load_scale: Union[float, Mapping[str, float]] = 1.0,
    pv_p_kw: Optional[Mapping[UnitPhase, float]] = None,
    pv_q_kvar: Optional[Mapping[UnitPhase, float]] = None,
) -> Dict[NodePhase, complex]:
    """
    Net injection per (bus, phase) in per-unit: inverter output minus load.
    """
    index = build_index(feeder)
    kw = pv_vector_kw(index, pv_p_kw or {}, pv_q_kvar) - load_vector_kw(index, load_scale)
    pu = kw / feeder.phase_base_kva
    return {key: complex(pu[i]) for i, key in enumerate(index.node_phases)}
