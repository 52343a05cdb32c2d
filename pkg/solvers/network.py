"""
Phase-level indexing of a radial feeder and the sparse operators shared by
the linear and nonlinear solvers.

Node-phases are (bus, phase) pairs sorted by bus id then phase; segment-phases
are (to_bus, phase) pairs, a segment being identified by the bus it feeds.
"""
import logging
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Mapping, Tuple, Union

import numpy as np
import scipy.sparse as sp

from model.errors import UnknownBusError, UnknownPhaseError
from model.feeder import Feeder, LineSegment, Phase

logger = logging.getLogger(__name__)

NodePhase = Tuple[str, Phase]
Injections = Mapping[NodePhase, complex]


def effective_impedance(segment: LineSegment) -> np.ndarray:
    """
    Impedance block with off-diagonal entries rotated by the nominal phase
    separation: z~[p, q] = exp(-j(theta_p - theta_q)) * z[p, q].

    Per-phase flows are assumed to keep the nominal 120 degree spacing, so the
    cross-phase term S[p, q] is approximated by exp(j(theta_p - theta_q)) * S[q, q].
    Folding that rotation into the impedance keeps the voltage equation
    linear in the per-phase flows. Diagonal entries are unchanged.
    """
    angles = np.array([p.angle for p in segment.phases])
    rotation = np.exp(-1j * (angles[:, None] - angles[None, :]))
    return np.asarray(segment.impedance) * rotation


@dataclass(frozen=True, eq=False)
class PhaseIndex:
    feeder: Feeder
    node_phases: Tuple[NodePhase, ...]
    seg_phases: Tuple[NodePhase, ...]
    node_pos: Dict[NodePhase, int]
    seg_pos: Dict[NodePhase, int]
    # segment-phase x node-phase, 1 where the node sits below the segment on that phase
    subtree: sp.csr_matrix
    # node-phase x segment-phase, self and mutual impedance of the segment if it is on the node's path
    path_z: sp.csr_matrix
    # same pattern with the rotated impedance, real and imaginary parts
    path_r_eff: sp.csr_matrix
    path_x_eff: sp.csr_matrix
    # node-phase position of each segment-phase's sending end
    from_node: np.ndarray
    to_node: np.ndarray
    # exp(j*theta_p) per node-phase
    rotation: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.node_phases)

    @property
    def n_segments(self) -> int:
        return len(self.seg_phases)

    def node(self, bus: str, phase: Phase) -> int:
        try:
            return self.node_pos[(bus, phase)]
        except KeyError:
            if bus not in self.feeder.buses:
                raise UnknownBusError(bus) from None
            raise UnknownPhaseError(bus, phase) from None

    def segment(self, to_bus: str, phase: Phase) -> int:
        try:
            return self.seg_pos[(to_bus, phase)]
        except KeyError:
            if to_bus not in self.feeder.buses:
                raise UnknownBusError(to_bus) from None
            raise UnknownPhaseError(to_bus, phase) from None

    def as_vector(self, injections: Union[Injections, np.ndarray]) -> np.ndarray:
        """
        Net injections (generation minus demand, pu) as a complex vector in
        node-phase order. Accepts a mapping or an already aligned array.
        """
        if isinstance(injections, np.ndarray):
            if injections.shape != (self.n_nodes,):
                raise ValueError(f"injection vector has shape {injections.shape}, expected ({self.n_nodes},)")
            return injections.astype(complex)
        out = np.zeros(self.n_nodes, dtype=complex)
        for key, value in injections.items():
            bus, phase = key
            out[self.node(bus, phase)] += complex(value)
        return out


def _build(feeder: Feeder) -> PhaseIndex:
    node_phases = tuple((b, p) for b in sorted(feeder.buses) for p in feeder.buses[b].phases)
    node_pos = {key: i for i, key in enumerate(node_phases)}

    segments = sorted(feeder.segments, key=lambda s: s.to_bus)
    seg_phases = tuple((s.to_bus, p) for s in segments for p in s.phases)
    seg_pos = {key: i for i, key in enumerate(seg_phases)}

    from_node = np.array([node_pos[(feeder.parent_segment(b).from_bus, p)] for b, p in seg_phases], dtype=int)
    to_node = np.array([node_pos.get((b, p), -1) for b, p in seg_phases], dtype=int)

    sub_rows, sub_cols = [], []
    for seg in segments:
        for bus in feeder.descendants(seg.to_bus):
            for phase in feeder.buses[bus].phases:
                sub_rows.append(seg_pos[(seg.to_bus, phase)])
                sub_cols.append(node_pos[(bus, phase)])
    subtree = sp.csr_matrix(
        (np.ones(len(sub_rows)), (sub_rows, sub_cols)), shape=(len(seg_phases), len(node_phases))
    )

    rows, cols, z_vals, z_eff = [], [], [], []
    for bus in sorted(feeder.buses):
        path = feeder.path_to_root(bus)
        for phase in feeder.buses[bus].phases:
            row = node_pos[(bus, phase)]
            for seg in path:
                i = seg.position(phase)
                rotated = effective_impedance(seg)
                for j, q in enumerate(seg.phases):
                    rows.append(row)
                    cols.append(seg_pos[(seg.to_bus, q)])
                    z_vals.append(seg.impedance[i, j])
                    z_eff.append(rotated[i, j])
    shape = (len(node_phases), len(seg_phases))
    path_z = sp.csr_matrix((np.array(z_vals, dtype=complex), (rows, cols)), shape=shape)
    z_eff = np.array(z_eff, dtype=complex)
    path_r_eff = sp.csr_matrix((z_eff.real, (rows, cols)), shape=shape)
    path_x_eff = sp.csr_matrix((z_eff.imag, (rows, cols)), shape=shape)

    rotation = np.exp(1j * np.array([p.angle for _, p in node_phases]))

    logger.debug(
        "indexed feeder %s: %d node-phases, %d segment-phases", feeder.name, len(node_phases), len(seg_phases)
    )
    return PhaseIndex(
        feeder=feeder,
        node_phases=node_phases,
        seg_phases=seg_phases,
        node_pos=node_pos,
        seg_pos=seg_pos,
        subtree=subtree,
        path_z=path_z,
        path_r_eff=path_r_eff,
        path_x_eff=path_x_eff,
        from_node=from_node,
        to_node=to_node,
        rotation=rotation,
    )


@lru_cache(maxsize=16)
def build_index(feeder: Feeder) -> PhaseIndex:
    """Cached per Feeder instance (feeders are immutable)."""
    return _build(feeder)
