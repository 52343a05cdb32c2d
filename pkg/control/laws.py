"""
Local reactive-power control laws for PV inverters.

Both laws are incremental: they turn the change in local measurements since
the last interval into a change of the inverter's var set-point. Quantities
are in kW / kvar at the inverter terminals and on the sensed child lines.
Positive q means the inverter injects vars.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Mapping, Tuple

from model.errors import UnknownPhaseError
from model.feeder import Feeder, Phase

logger = logging.getLogger(__name__)

STRATEGIES = ("none", "thevenin", "pfm")


@dataclass(frozen=True)
class LocalMeasurement:
    bus: str
    phase: Phase
    # change in PV active injection at this bus since the last interval
    dp_inj: float
    # child bus -> (dP, dQ) on the segment feeding it, since the last interval
    child_flow_deltas: Mapping[str, Tuple[float, float]] = field(default_factory=dict)
    p_inj_now: float = 0.0


@dataclass(frozen=True)
class TheveninImpedance:
    bus: str
    phase: Phase
    r: float
    x: float

    @property
    def ratio(self) -> float:
        # the substation bus has no upstream impedance; its control is disabled
        if self.x == 0:
            return 0.0
        return self.r / self.x


@dataclass(frozen=True)
class ControlDispatch:
    bus: str
    phase: Phase
    q_setpoint: float
    requested: float
    clipped: bool


def thevenin_impedance(feeder: Feeder, bus: str, phase: Phase) -> TheveninImpedance:
    """Sum of the self impedances on `phase` along the path from the substation."""
    if phase not in feeder.bus(bus).phases:
        raise UnknownPhaseError(bus, phase)
    r = x = 0.0
    for seg in feeder.path_to_root(bus):
        z = seg.diagonal(phase)
        r += z.real
        x += z.imag
    return TheveninImpedance(bus=bus, phase=phase, r=r, x=x)


def clip_capability(p_inj: float, q_requested: float, rating: float) -> Tuple[float, bool]:
    """Clamp q into the inverter's capability circle p^2 + q^2 <= rating^2."""
    if not rating > 0:
        raise ValueError("rating must be positive")
    q_max = math.sqrt(max(rating * rating - p_inj * p_inj, 0.0))
    q_actual = min(max(q_requested, -q_max), q_max)
    return q_actual, q_actual != q_requested


def _dispatch(measurement: LocalMeasurement, dq: float, prev_q: float, rating_kva: float) -> ControlDispatch:
    requested = prev_q + dq
    q, clipped = clip_capability(measurement.p_inj_now, requested, rating_kva)
    if clipped:
        logger.debug(
            "inverter at %s.%s clipped: requested %.3f kvar, allowed %.3f",
            measurement.bus,
            measurement.phase.name,
            requested,
            q,
        )
    return ControlDispatch(
        bus=measurement.bus, phase=measurement.phase, q_setpoint=q, requested=requested, clipped=clipped
    )


def thevenin_dispatch(
    measurement: LocalMeasurement,
    thevenin: TheveninImpedance,
    prev_q: float,
    rating_kva: float,
) -> ControlDispatch:
    """dq = -(R/X) dp, R and X being the Thevenin resistance and reactance."""
    dq = -thevenin.ratio * measurement.dp_inj
    return _dispatch(measurement, dq, prev_q, rating_kva)


def pfm_dispatch(
    measurement: LocalMeasurement,
    segment_impedance: complex,
    prev_q: float,
    rating_kva: float,
) -> ControlDispatch:
    """
    Hold the voltage across the parent segment by matching the change in
    flow through it:

        dq = (r/x) * (sum_k dP_k - dp) + sum_k dQ_k

    with r, x the parent segment's self impedance on this phase and the sums
    over the child segments. At a leaf this is the Thevenin law with the
    local segment's ratio.
    """
    z = complex(segment_impedance)
    ratio = 0.0 if z.imag == 0 else z.real / z.imag
    sum_dp = sum(d[0] for d in measurement.child_flow_deltas.values())
    sum_dq = sum(d[1] for d in measurement.child_flow_deltas.values())
    dq = ratio * (sum_dp - measurement.dp_inj) + sum_dq
    return _dispatch(measurement, dq, prev_q, rating_kva)
