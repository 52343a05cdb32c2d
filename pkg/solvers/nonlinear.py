"""
Three-phase backward/forward sweep for radial feeders.

Backward: branch currents are subtree sums of the constant-power load
currents conj(S / V) at the current iterate. Forward: V = V0 - Zpath I,
which is V_j = V_i - z_ij I_ij applied along every path with the full
mutual-coupling blocks.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, Optional, Union

import numpy as np

from model.feeder import Feeder, Phase
from solvers.network import Injections, PhaseIndex, build_index

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SweepOptions:
    tolerance: float = 1e-8
    max_iterations: int = 100
    collapse_threshold: float = 0.5
    warm_start: bool = True

    def validate(self) -> None:
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if not 0 <= self.collapse_threshold < 1:
            raise ValueError("collapse_threshold must be in [0, 1)")


@dataclass(frozen=True)
class PhasorSolution:
    index: PhaseIndex
    # complex pu per node-phase
    v: np.ndarray
    # complex pu per segment-phase
    i_branch: np.ndarray
    # sending-end complex power per segment-phase
    s_flow: np.ndarray
    iterations: int
    converged: bool
    collapsed: bool = False
    injections: np.ndarray = field(default=None, repr=False)

    def voltage(self, bus: str, phase: Phase) -> complex:
        return complex(self.v[self.index.node(bus, phase)])

    def magnitude(self, bus: str, phase: Phase) -> float:
        return abs(self.voltage(bus, phase))

    def magnitudes(self) -> np.ndarray:
        return np.abs(self.v)

    def flow(self, to_bus: str, phase: Phase) -> complex:
        """Sending-end power on the segment feeding `to_bus`."""
        return complex(self.s_flow[self.index.segment(to_bus, phase)])

    def substation_power(self) -> Dict[Phase, complex]:
        feeder = self.index.feeder
        out = {}
        for child in feeder.children(feeder.root):
            for phase in feeder.parent_segment(child).phases:
                out[phase] = out.get(phase, 0j) + self.flow(child, phase)
        return out

    def losses(self) -> Dict[Phase, complex]:
        """
        Series losses per phase: power drawn at the substation minus the net
        consumption of every non-root bus on that phase.
        """
        if self.injections is None:
            raise ValueError("solution carries no injections")
        feeder = self.index.feeder
        out = self.substation_power()
        for i, (bus, phase) in enumerate(self.index.node_phases):
            if bus != feeder.root:
                out[phase] = out.get(phase, 0j) + complex(self.injections[i])
        return out


def _branch_currents(index: PhaseIndex, v: np.ndarray, s_inj: np.ndarray) -> np.ndarray:
    i_load = np.conj(-s_inj / v)
    return index.subtree @ i_load


def solve_nonlinear(
    feeder: Feeder,
    injections: Union[Injections, np.ndarray],
    v_substation: Optional[float] = None,
    options: Optional[SweepOptions] = None,
    v_init: Optional[np.ndarray] = None,
) -> PhasorSolution:
    """
    Solve for complex voltages with constant-power injections.

    Non-convergence and voltage collapse (any |V| below the collapse
    threshold) are reported through `converged` / `collapsed`; the last
    iterate is returned either way.
    """
    options = options or SweepOptions()
    index = build_index(feeder)
    s_inj = index.as_vector(injections)
    v_sub = feeder.v_substation if v_substation is None else v_substation

    v0 = v_sub * index.rotation
    v = v0.copy() if v_init is None else np.asarray(v_init, dtype=complex).copy()

    converged = False
    collapsed = False
    iterations = 0
    for iterations in range(1, options.max_iterations + 1):
        i_branch = _branch_currents(index, v, s_inj)
        v_new = v0 - index.path_z @ i_branch
        mismatch = float(np.max(np.abs(v_new - v))) if v.size else 0.0
        v = v_new
        if v.size and float(np.min(np.abs(v))) < options.collapse_threshold:
            collapsed = True
            break
        if mismatch < options.tolerance:
            converged = True
            break

    if collapsed:
        logger.warning("voltage collapse on %s after %d sweeps", feeder.name, iterations)
    elif not converged:
        logger.warning("sweep on %s did not converge in %d iterations", feeder.name, iterations)
    else:
        logger.debug("sweep on %s converged in %d iterations", feeder.name, iterations)

    i_branch = _branch_currents(index, v, s_inj)
    s_flow = v[index.from_node] * np.conj(i_branch)
    return PhasorSolution(
        index=index,
        v=v,
        i_branch=np.asarray(i_branch),
        s_flow=np.asarray(s_flow),
        iterations=iterations,
        converged=converged,
        collapsed=collapsed,
        injections=s_inj,
    )


def residual(feeder: Feeder, solution: PhasorSolution, injections: Union[Injections, np.ndarray]) -> float:
    """
    Worst mismatch of the exact branch-flow equations at `solution`:

      V_i V_i^H - V_j V_j^H - (S z^H + z S^H) + z I I^H z^H = 0    per segment
      diag(S_ij - z I I^H) - sum_k diag(S_jk) = -s_inj_j           per bus

    with S = V_i I^H built from the solution's voltages and branch currents.
    """
    index = build_index(feeder)
    s_inj = index.as_vector(injections)
    v = np.asarray(solution.v)
    current = np.asarray(solution.i_branch)
    worst = 0.0

    # receiving-end power per (bus, phase), to be balanced against children and load
    balance = {key: complex(s_inj[i]) for i, key in enumerate(index.node_phases)}

    for seg in feeder.segments:
        src = [index.node(seg.from_bus, p) for p in seg.phases]
        sp_pos = [index.segment(seg.to_bus, p) for p in seg.phases]
        z = np.asarray(seg.impedance)
        i_vec = current[sp_pos]
        v_i = v[src]
        # phases absent at the receiving bus carry no current; use the sending-end value
        v_j = np.array(
            [
                v[index.node_pos[(seg.to_bus, p)]] if (seg.to_bus, p) in index.node_pos else v_i[k] - (z @ i_vec)[k]
                for k, p in enumerate(seg.phases)
            ]
        )
        s_mat = np.outer(v_i, np.conj(i_vec))
        zi = z @ i_vec
        drop = (
            np.outer(v_i, np.conj(v_i))
            - np.outer(v_j, np.conj(v_j))
            - (s_mat @ z.conj().T + z @ s_mat.conj().T)
            + np.outer(zi, np.conj(zi))
        )
        worst = max(worst, float(np.max(np.abs(drop))))

        received = np.diag(s_mat - np.outer(zi, np.conj(i_vec)))
        for k, p in enumerate(seg.phases):
            if (seg.to_bus, p) in balance:
                balance[(seg.to_bus, p)] += received[k]
            if (seg.from_bus, p) in balance:
                balance[(seg.from_bus, p)] -= s_mat[k, k]

    root = feeder.root
    for (bus, _), mismatch in balance.items():
        if bus != root:
            worst = max(worst, abs(mismatch))
    return worst
