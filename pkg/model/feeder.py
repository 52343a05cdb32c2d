"""
Radial distribution feeder model.

Buses, line segments and PV inverters as immutable records plus the
topology queries the solvers and control laws rely on. Impedances are
stored in per-unit of the zone base; loads in kW/kvar per phase.
"""
import logging
import math
from dataclasses import dataclass, field
from enum import IntEnum
from functools import cached_property
from typing import Dict, List, Mapping, Optional, Tuple

import networkx as nx
import numpy as np

from model.errors import FeederValidationError, UnknownBusError, UnknownPhaseError

logger = logging.getLogger(__name__)

DEFAULT_ZONE = "default"


class Phase(IntEnum):
    A = 0
    B = 1
    C = 2

    @property
    def angle(self) -> float:
        """Nominal phase angle in radians: a = 0, b = -120 deg, c = +120 deg."""
        return (0.0, -2.0 * math.pi / 3.0, 2.0 * math.pi / 3.0)[int(self)]


ALL_PHASES: Tuple[Phase, ...] = (Phase.A, Phase.B, Phase.C)


@dataclass(frozen=True)
class Bus:
    id: str
    phases: Tuple[Phase, ...]
    # phase -> (kW, kvar) consumed
    load: Mapping[Phase, Tuple[float, float]] = field(default_factory=dict)
    nominal_voltage: float = 0.0
    zone: str = DEFAULT_ZONE

    def load_on(self, phase: Phase) -> complex:
        p, q = self.load.get(phase, (0.0, 0.0))
        return complex(p, q)


@dataclass(frozen=True, eq=False)
class LineSegment:
    from_bus: str
    to_bus: str
    phases: Tuple[Phase, ...]
    # k x k complex, per-unit, rows/cols follow `phases`
    impedance: np.ndarray

    @property
    def name(self) -> str:
        return f"{self.from_bus}->{self.to_bus}"

    def position(self, phase: Phase) -> int:
        try:
            return self.phases.index(phase)
        except ValueError:
            raise UnknownPhaseError(self.name, phase) from None

    def z(self, p: Phase, q: Phase) -> complex:
        return complex(self.impedance[self.position(p), self.position(q)])

    def diagonal(self, phase: Phase) -> complex:
        return self.z(phase, phase)


@dataclass(frozen=True)
class PvUnit:
    id: str
    bus: str
    phases: Tuple[Phase, ...]
    # inverter apparent-power rating for the whole unit
    rating_kva: float
    # active-power rating of the array; defaults to rating_kva (no oversizing)
    p_rated_kw: Optional[float] = None

    @property
    def active_rating_kw(self) -> float:
        return self.rating_kva if self.p_rated_kw is None else self.p_rated_kw

    @property
    def phase_rating_kva(self) -> float:
        return self.rating_kva / len(self.phases)

    @property
    def phase_p_rated_kw(self) -> float:
        return self.active_rating_kw / len(self.phases)


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.subject}: {self.message}"


@dataclass(frozen=True, eq=False)
class Feeder:
    name: str
    root: str
    buses: Mapping[str, Bus]
    segments: Tuple[LineSegment, ...]
    pv_units: Tuple[PvUnit, ...] = ()
    # three-phase power base
    base_kva: float = 3000.0
    # zone -> line-to-line kV
    base_kv_ll: Mapping[str, float] = field(default_factory=lambda: {DEFAULT_ZONE: 12.0})
    v_substation: float = 1.0

    # ----------------------------------------------------------------
    # bases
    # ----------------------------------------------------------------
    @property
    def phase_base_kva(self) -> float:
        return self.base_kva / 3.0

    def z_base(self, zone: str = DEFAULT_ZONE) -> float:
        """Ohms per unit for the given voltage zone."""
        kv = self.base_kv_ll[zone]
        return kv * kv * 1000.0 / self.base_kva

    # ----------------------------------------------------------------
    # topology
    # ----------------------------------------------------------------
    @cached_property
    def _parent_segment(self) -> Dict[str, LineSegment]:
        parents = {}
        for seg in self.segments:
            parents.setdefault(seg.to_bus, seg)
        return parents

    @cached_property
    def _children(self) -> Dict[str, List[str]]:
        children = {b: [] for b in self.buses}
        for seg in self.segments:
            children.setdefault(seg.from_bus, []).append(seg.to_bus)
        return {b: sorted(kids) for b, kids in children.items()}

    def bus(self, bus_id: str) -> Bus:
        try:
            return self.buses[bus_id]
        except KeyError:
            raise UnknownBusError(bus_id) from None

    def parent_segment(self, bus_id: str) -> Optional[LineSegment]:
        self.bus(bus_id)
        return self._parent_segment.get(bus_id)

    def children(self, bus_id: str) -> List[str]:
        """Child buses in sorted-by-id order; empty for a leaf."""
        self.bus(bus_id)
        return list(self._children.get(bus_id, []))

    def path_to_root(self, bus_id: str) -> List[LineSegment]:
        """Segments from the substation down to the bus; empty for the root."""
        self.bus(bus_id)
        path = []
        seen = {bus_id}
        current = bus_id
        while current != self.root:
            seg = self._parent_segment.get(current)
            if seg is None:
                break
            path.append(seg)
            current = seg.from_bus
            if current in seen:
                raise FeederValidationError(
                    [Violation("not_a_tree", bus_id, "cycle on the path to the root")]
                )
            seen.add(current)
        path.reverse()
        return path

    def depth(self, bus_id: str) -> int:
        return len(self.path_to_root(bus_id))

    def descendants(self, bus_id: str) -> List[str]:
        """The bus itself and everything below it."""
        out = []
        stack = [bus_id]
        seen = set()
        while stack:
            b = stack.pop()
            if b in seen:
                continue
            seen.add(b)
            out.append(b)
            stack.extend(self._children.get(b, []))
        return sorted(out)

    def pv_buses(self) -> List[str]:
        return sorted({u.bus for u in self.pv_units})

    def pv_unit(self, unit_id: str) -> PvUnit:
        for unit in self.pv_units:
            if unit.id == unit_id:
                return unit
        raise KeyError(f"unknown PV unit {unit_id!r}")

    def checked(self) -> "Feeder":
        """Return self, or raise FeederValidationError listing every violation."""
        return ensure_valid(self)

    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(sorted(self.buses))
        for seg in self.segments:
            g.add_edge(seg.from_bus, seg.to_bus)
        return g


# --------------------------------------------------------------------
# validation
# --------------------------------------------------------------------
def validate(feeder: Feeder) -> List[Violation]:
    """
    Check the radial-feeder invariants. Returns every violation found;
    an empty list means the feeder is usable. Never raises.
    """
    out: List[Violation] = []

    if not feeder.base_kva or feeder.base_kva <= 0:
        out.append(Violation("bad_base", "bases", "base kVA must be positive"))
    for zone, kv in feeder.base_kv_ll.items():
        if not kv or kv <= 0:
            out.append(Violation("bad_base", zone, "zone kV must be positive"))

    if feeder.root not in feeder.buses:
        out.append(Violation("unknown_bus", feeder.root, "root bus is not defined"))

    for bus_id in sorted(feeder.buses):
        bus = feeder.buses[bus_id]
        if not bus.phases:
            out.append(Violation("phase_mismatch", bus_id, "bus has no phases"))
        for phase in bus.load:
            if phase not in bus.phases:
                out.append(Violation("load_phase", bus_id, f"load on absent phase {phase.name}"))
        if bus.nominal_voltage <= 0:
            out.append(Violation("nominal_voltage", bus_id, "nominal voltage must be positive"))
        if bus.zone not in feeder.base_kv_ll:
            out.append(Violation("unknown_zone", bus_id, f"zone {bus.zone!r} has no kV base"))

    parents: Dict[str, int] = {}
    for seg in feeder.segments:
        known = True
        for end in (seg.from_bus, seg.to_bus):
            if end not in feeder.buses:
                out.append(Violation("unknown_bus", seg.name, f"bus {end!r} is not defined"))
                known = False
        k = len(seg.phases)
        z = np.asarray(seg.impedance)
        if z.shape != (k, k):
            out.append(
                Violation("impedance_shape", seg.name, f"impedance is {z.shape}, expected {(k, k)}")
            )
        else:
            for i, phase in enumerate(seg.phases):
                if z[i, i].imag == 0:
                    out.append(
                        Violation("zero_reactance", seg.name, f"zero self reactance on phase {phase.name}")
                    )
        parents[seg.to_bus] = parents.get(seg.to_bus, 0) + 1
        if not known:
            continue
        src, dst = feeder.buses[seg.from_bus], feeder.buses[seg.to_bus]
        if not set(dst.phases) <= set(seg.phases) or not set(seg.phases) <= set(src.phases):
            out.append(
                Violation(
                    "phase_mismatch",
                    seg.name,
                    f"phases {_label(dst.phases)} <= {_label(seg.phases)} <= {_label(src.phases)} does not hold",
                )
            )
        if src.zone != dst.zone:
            out.append(Violation("zone_mismatch", seg.name, "segment crosses voltage zones"))

    for bus_id, count in sorted(parents.items()):
        if bus_id == feeder.root:
            out.append(Violation("root_has_parent", bus_id, "the substation bus cannot be fed"))
        elif count > 1:
            out.append(Violation("multiple_parents", bus_id, f"{count} segments feed this bus"))

    und = nx.Graph()
    und.add_nodes_from(feeder.buses)
    for seg in feeder.segments:
        if seg.from_bus in feeder.buses and seg.to_bus in feeder.buses:
            und.add_edge(seg.from_bus, seg.to_bus)
    if und.number_of_nodes() and (
        len(feeder.segments) != und.number_of_nodes() - 1 or not nx.is_tree(und)
    ):
        out.append(Violation("not_a_tree", feeder.name, "not a tree"))

    if feeder.root in feeder.buses:
        reached = nx.descendants(feeder.graph(), feeder.root) | {feeder.root}
        for bus_id in sorted(set(feeder.buses) - reached):
            out.append(Violation("unreachable", bus_id, "not reachable from the root"))

    seen_pv = set()
    for unit in feeder.pv_units:
        if unit.bus not in feeder.buses:
            out.append(Violation("unknown_bus", unit.id, f"PV bus {unit.bus!r} is not defined"))
            continue
        if not unit.phases or not set(unit.phases) <= set(feeder.buses[unit.bus].phases):
            out.append(Violation("pv_phase", unit.id, "PV phases must be present on its bus"))
        if not unit.rating_kva or unit.rating_kva <= 0:
            out.append(Violation("bad_rating", unit.id, "rating must be positive"))
        elif unit.active_rating_kw <= 0 or unit.active_rating_kw > unit.rating_kva:
            out.append(Violation("bad_rating", unit.id, "active rating must be in (0, rating_kva]"))
        for phase in unit.phases:
            key = (unit.bus, phase)
            if key in seen_pv:
                out.append(
                    Violation("duplicate_pv", unit.id, f"second PV unit on {unit.bus}.{phase.name}")
                )
            seen_pv.add(key)

    if out:
        logger.debug("feeder %s has %d violations", feeder.name, len(out))
    return out


def ensure_valid(feeder: Feeder) -> Feeder:
    problems = validate(feeder)
    if problems:
        raise FeederValidationError(problems)
    return feeder


def _label(phases) -> str:
    return "".join(p.name for p in phases) or "-"
