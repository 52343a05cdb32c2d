"""
Lossless linearized three-phase branch-flow solve.

Flows are the subtree sums of consumption on each phase; squared voltage
magnitudes drop along the path by 2 * sum_q (r~[p,q] P_q + x~[p,q] Q_q),
with r~, x~ taken from `effective_impedance`. The model is affine in the
injections, so the solve is closed-form.
"""
import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Union

import numpy as np

from model.feeder import Feeder, LineSegment, Phase
from solvers.network import Injections, PhaseIndex, build_index, effective_impedance

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class LinearSolution:
    index: PhaseIndex
    # pu^2 per node-phase
    v_sq: np.ndarray
    # pu per segment-phase, positive towards the leaves
    p_flow: np.ndarray
    q_flow: np.ndarray

    def voltage_sq(self, bus: str, phase: Phase) -> float:
        return float(self.v_sq[self.index.node(bus, phase)])

    def flow(self, to_bus: str, phase: Phase) -> complex:
        """Flow on the segment feeding `to_bus`."""
        i = self.index.segment(to_bus, phase)
        return complex(self.p_flow[i], self.q_flow[i])

    def magnitudes(self) -> np.ndarray:
        return np.sqrt(np.maximum(self.v_sq, 0.0))

    def root_flow(self) -> Dict[Phase, complex]:
        """Total flow leaving the substation per phase."""
        feeder = self.index.feeder
        out = {}
        for child in feeder.children(feeder.root):
            for phase in feeder.parent_segment(child).phases:
                out[phase] = out.get(phase, 0j) + self.flow(child, phase)
        return out


def solve_linear(
    feeder: Feeder,
    injections: Union[Injections, np.ndarray],
    v_substation: Optional[float] = None,
) -> LinearSolution:
    index = build_index(feeder)
    s_inj = index.as_vector(injections)
    v0 = feeder.v_substation if v_substation is None else v_substation

    consumption = -s_inj
    p_flow = index.subtree @ consumption.real
    q_flow = index.subtree @ consumption.imag
    v_sq = v0 * v0 - 2.0 * (index.path_r_eff @ p_flow + index.path_x_eff @ q_flow)

    if (v_sq <= 0).any():
        logger.warning("linear solve of %s produced non-positive v^2; loading is far outside the model", feeder.name)
    return LinearSolution(index=index, v_sq=np.asarray(v_sq), p_flow=np.asarray(p_flow), q_flow=np.asarray(q_flow))


@dataclass(frozen=True)
class SegmentSensitivity:
    segment: LineSegment
    # phase q -> 2 r~[p, q] and 2 x~[p, q]
    r_coeff: Dict[Phase, float]
    x_coeff: Dict[Phase, float]


def voltage_sensitivity(feeder: Feeder, bus: str, phase: Phase) -> List[SegmentSensitivity]:
    """
    Coefficients of the squared-voltage change at (bus, phase) per ancestor
    segment, substation first:

        dv = -sum_s sum_q (r_coeff[q] * dP_s[q] + x_coeff[q] * dQ_s[q])

    where dP_s, dQ_s are the flow changes on segment s.
    """
    index = build_index(feeder)
    index.node(bus, phase)
    out = []
    for seg in feeder.path_to_root(bus):
        zt = effective_impedance(seg)
        i = seg.position(phase)
        out.append(
            SegmentSensitivity(
                segment=seg,
                r_coeff={q: 2.0 * float(zt[i, j].real) for j, q in enumerate(seg.phases)},
                x_coeff={q: 2.0 * float(zt[i, j].imag) for j, q in enumerate(seg.phases)},
            )
        )
    return out
