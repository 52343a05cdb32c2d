import json
import logging
import math
from pathlib import Path
from typing import Any, Dict, List, Mapping, Tuple, Union

import numpy as np

from model.errors import FeederParseError
from model.feeder import (
    ALL_PHASES,
    DEFAULT_ZONE,
    Bus,
    Feeder,
    LineSegment,
    Phase,
    PvUnit,
    validate,
)
from utils.helpers import is_number, parse_phases, phase_string, safe_strip

logger = logging.getLogger(__name__)

__all__ = ["FeederParseError", "parse_feeder", "load_feeder", "dump_feeder"]

TOP_KEYS = {"name", "description", "root", "bases", "substation", "buses", "segments", "pv_units"}
BASES_KEYS = {"kva", "kv_ll"}
SUBSTATION_KEYS = {"v_pu"}
BUS_KEYS = {"id", "phases", "zone", "load"}
SEGMENT_KEYS = {"from", "to", "phases", "impedance"}
PV_KEYS = {"id", "bus", "phases", "rating_kva", "p_rated_kw"}

Document = Union[str, bytes, Mapping[str, Any]]


# ---------------------------------------------------------
# Small typed accessors; every failure names its JSON path
# ---------------------------------------------------------
def _require_mapping(value, path: str) -> Mapping[str, Any]:
    if not isinstance(value, dict):
        raise FeederParseError("expected an object", path=path)
    return value


def _require_list(value, path: str) -> List[Any]:
    if not isinstance(value, list):
        raise FeederParseError("expected an array", path=path)
    return value


def _check_keys(obj: Mapping[str, Any], allowed, required, path: str) -> None:
    unknown = sorted(set(obj) - set(allowed))
    if unknown:
        raise FeederParseError(f"unknown key {unknown[0]!r}", path=f"{path}.{unknown[0]}")
    for key in required:
        if key not in obj:
            raise FeederParseError(f"missing key {key!r}", path=f"{path}.{key}")


def _number(value, path: str, positive: bool = False, allow_zero: bool = True) -> float:
    if not is_number(value):
        raise FeederParseError("expected a finite number", path=path)
    value = float(value)
    if positive and (value < 0 or (value == 0 and not allow_zero)):
        raise FeederParseError("expected a positive number", path=path)
    return value


def _identifier(value, path: str) -> str:
    if not isinstance(value, str) or not safe_strip(value):
        raise FeederParseError("expected a non-empty string id", path=path)
    return safe_strip(value)


def _phases(value, path: str) -> Tuple[Phase, ...]:
    try:
        return parse_phases(value)
    except ValueError as exc:
        raise FeederParseError(str(exc), path=path) from None


# ---------------------------------------------------------
# Sections
# ---------------------------------------------------------
def _parse_bases(raw) -> Tuple[float, Dict[str, float]]:
    bases = _require_mapping(raw, "$.bases")
    _check_keys(bases, BASES_KEYS, ("kva", "kv_ll"), "$.bases")
    kva = _number(bases["kva"], "$.bases.kva", positive=True, allow_zero=False)

    kv_raw = bases["kv_ll"]
    if is_number(kv_raw):
        zones = {DEFAULT_ZONE: _number(kv_raw, "$.bases.kv_ll", positive=True, allow_zero=False)}
    else:
        kv_map = _require_mapping(kv_raw, "$.bases.kv_ll")
        if not kv_map:
            raise FeederParseError("at least one voltage zone is required", path="$.bases.kv_ll")
        zones = {
            _identifier(zone, "$.bases.kv_ll"): _number(
                kv, f"$.bases.kv_ll.{zone}", positive=True, allow_zero=False
            )
            for zone, kv in kv_map.items()
        }
    return kva, zones


def _parse_bus(raw, path: str, zones: Mapping[str, float]) -> Bus:
    obj = _require_mapping(raw, path)
    _check_keys(obj, BUS_KEYS, ("id", "phases"), path)
    bus_id = _identifier(obj["id"], f"{path}.id")
    phases = _phases(obj["phases"], f"{path}.phases")

    zone = obj.get("zone", DEFAULT_ZONE)
    if not isinstance(zone, str) or zone not in zones:
        raise FeederParseError(f"unknown voltage zone {zone!r}", path=f"{path}.zone")

    load: Dict[Phase, Tuple[float, float]] = {}
    load_raw = obj.get("load")
    if load_raw is None:
        load_raw = {}
    load_map = _require_mapping(load_raw, f"{path}.load")
    for label, pq in sorted(load_map.items()):
        where = f"{path}.load.{label}"
        phase = _phases(label, where)
        if len(phase) != 1:
            raise FeederParseError("load key must name one phase", path=where)
        if phase[0] not in phases:
            raise FeederParseError(f"load on absent phase {phase[0].name}", path=where)
        pair = _require_list(pq, where)
        if len(pair) != 2:
            raise FeederParseError("load must be [kW, kvar]", path=where)
        load[phase[0]] = (_number(pair[0], f"{where}[0]"), _number(pair[1], f"{where}[1]"))

    nominal = zones[zone] * 1000.0 / math.sqrt(3.0)
    return Bus(id=bus_id, phases=phases, load=load, nominal_voltage=nominal, zone=zone)


def _parse_impedance(raw, phases: Tuple[Phase, ...], path: str, z_base: float) -> np.ndarray:
    """
    3x3 nested [r, x] ohm pairs indexed A, B, C; null marks an absent conductor.
    Returns the k x k per-unit block for the segment's phases.
    """
    rows = _require_list(raw, path)
    if len(rows) != 3:
        raise FeederParseError("impedance must have 3 rows (A, B, C)", path=path)
    full = np.zeros((3, 3), dtype=complex)
    for i, row in enumerate(rows):
        row_path = f"{path}[{i}]"
        row = _require_list(row, row_path)
        if len(row) != 3:
            raise FeederParseError("impedance row must have 3 entries", path=row_path)
        for j, entry in enumerate(row):
            where = f"{row_path}[{j}]"
            present = ALL_PHASES[i] in phases and ALL_PHASES[j] in phases
            if entry is None:
                if present:
                    raise FeederParseError("missing impedance for a present phase", path=where)
                continue
            if not present:
                raise FeederParseError("impedance given for an absent phase (use null)", path=where)
            pair = _require_list(entry, where)
            if len(pair) != 2:
                raise FeederParseError("impedance entry must be [r, x]", path=where)
            full[i, j] = complex(_number(pair[0], f"{where}[0]"), _number(pair[1], f"{where}[1]"))
    idx = [int(p) for p in phases]
    return full[np.ix_(idx, idx)] / z_base


def _parse_segment(raw, path: str, buses: Mapping[str, Bus], feeder_z_base) -> LineSegment:
    obj = _require_mapping(raw, path)
    _check_keys(obj, SEGMENT_KEYS, ("from", "to", "phases", "impedance"), path)
    src = _identifier(obj["from"], f"{path}.from")
    dst = _identifier(obj["to"], f"{path}.to")
    for key, bus_id in (("from", src), ("to", dst)):
        if bus_id not in buses:
            raise FeederParseError(f"segment references missing bus {bus_id!r}", path=f"{path}.{key}")
    phases = _phases(obj["phases"], f"{path}.phases")
    z = _parse_impedance(obj["impedance"], phases, f"{path}.impedance", feeder_z_base(buses[src].zone))
    return LineSegment(from_bus=src, to_bus=dst, phases=phases, impedance=z)


def _parse_pv(raw, path: str, buses: Mapping[str, Bus]) -> PvUnit:
    obj = _require_mapping(raw, path)
    _check_keys(obj, PV_KEYS, ("id", "bus", "phases", "rating_kva"), path)
    unit_id = _identifier(obj["id"], f"{path}.id")
    bus_id = _identifier(obj["bus"], f"{path}.bus")
    if bus_id not in buses:
        raise FeederParseError(f"PV unit references missing bus {bus_id!r}", path=f"{path}.bus")
    rating = _number(obj["rating_kva"], f"{path}.rating_kva", positive=True, allow_zero=False)
    p_rated = None
    if obj.get("p_rated_kw") is not None:
        p_rated = _number(obj["p_rated_kw"], f"{path}.p_rated_kw", positive=True, allow_zero=False)
    return PvUnit(
        id=unit_id,
        bus=bus_id,
        phases=_phases(obj["phases"], f"{path}.phases"),
        rating_kva=rating,
        p_rated_kw=p_rated,
    )


def _load_document(document: Document) -> Mapping[str, Any]:
    if isinstance(document, Mapping):
        return document
    if isinstance(document, bytes):
        try:
            document = document.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FeederParseError(f"document is not UTF-8: {exc.reason}") from None
    if not isinstance(document, str):
        raise FeederParseError("document must be text, bytes or a mapping")
    try:
        return json.loads(document)
    except json.JSONDecodeError as exc:
        raise FeederParseError(f"syntax error: {exc.msg}", line=exc.lineno, column=exc.colno) from None


# ---------------------------------------------------------
# Public API
# ---------------------------------------------------------
def parse_feeder(document: Document) -> Feeder:
    """
    Parse a feeder document (JSON text, bytes, or an already-decoded mapping)
    into a validated Feeder with every impedance in per-unit.

    Raises FeederParseError for syntax errors (line/column), semantic errors
    (JSON path) and topology violations (`violations` populated).
    """
    doc = _require_mapping(_load_document(document), "$")
    _check_keys(doc, TOP_KEYS, ("root", "bases", "buses", "segments"), "$")

    try:
        base_kva, zones = _parse_bases(doc["bases"])

        def z_base(zone: str) -> float:
            kv = zones[zone]
            return kv * kv * 1000.0 / base_kva

        v_sub = 1.0
        if doc.get("substation") is not None:
            sub = _require_mapping(doc["substation"], "$.substation")
            _check_keys(sub, SUBSTATION_KEYS, (), "$.substation")
            if "v_pu" in sub:
                v_sub = _number(sub["v_pu"], "$.substation.v_pu", positive=True, allow_zero=False)

        buses = {}
        for i, raw in enumerate(_require_list(doc["buses"], "$.buses")):
            bus = _parse_bus(raw, f"$.buses[{i}]", zones)
            if bus.id in buses:
                raise FeederParseError(f"duplicate bus id {bus.id!r}", path=f"$.buses[{i}].id")
            buses[bus.id] = bus

        root = _identifier(doc["root"], "$.root")
        if root not in buses:
            raise FeederParseError(f"root bus {root!r} is not defined", path="$.root")

        segments = tuple(
            _parse_segment(raw, f"$.segments[{i}]", buses, z_base)
            for i, raw in enumerate(_require_list(doc["segments"], "$.segments"))
        )

        pv_units = []
        seen = set()
        for i, raw in enumerate(_require_list(doc.get("pv_units") or [], "$.pv_units")):
            unit = _parse_pv(raw, f"$.pv_units[{i}]", buses)
            if unit.id in seen:
                raise FeederParseError(f"duplicate PV id {unit.id!r}", path=f"$.pv_units[{i}].id")
            seen.add(unit.id)
            pv_units.append(unit)

        name = doc.get("name", "feeder")
        if not isinstance(name, str):
            raise FeederParseError("expected a string", path="$.name")
    except FeederParseError:
        raise
    except (TypeError, ValueError, KeyError, AttributeError, IndexError) as exc:
        # Anything that slipped past the typed accessors is still a bad document
        raise FeederParseError(f"malformed document: {exc}") from None

    feeder = Feeder(
        name=name,
        root=root,
        buses=buses,
        segments=segments,
        pv_units=tuple(sorted(pv_units, key=lambda u: u.id)),
        base_kva=base_kva,
        base_kv_ll=zones,
        v_substation=v_sub,
    )

    problems = validate(feeder)
    if problems:
        raise FeederParseError("feeder failed validation", violations=problems)

    logger.debug(
        "parsed feeder %s: %d buses, %d segments, %d PV units",
        feeder.name,
        len(buses),
        len(segments),
        len(pv_units),
    )
    return feeder


def load_feeder(path: Union[str, Path]) -> Feeder:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise FeederParseError(f"cannot read {path}: {exc.strerror}") from None
    return parse_feeder(text)


def dump_feeder(feeder: Feeder) -> Dict[str, Any]:
    """
    Inverse of parse_feeder: per-unit impedances go back to ohms.
    """
    kv = dict(feeder.base_kv_ll)
    buses = []
    for bus_id in sorted(feeder.buses):
        bus = feeder.buses[bus_id]
        entry = {"id": bus.id, "phases": phase_string(bus.phases)}
        if bus.zone != DEFAULT_ZONE:
            entry["zone"] = bus.zone
        if bus.load:
            entry["load"] = {p.name: [float(pq[0]), float(pq[1])] for p, pq in sorted(bus.load.items())}
        buses.append(entry)

    segments = []
    for seg in sorted(feeder.segments, key=lambda s: (s.to_bus, s.from_bus)):
        z_ohm = np.asarray(seg.impedance) * feeder.z_base(feeder.buses[seg.from_bus].zone)
        rows = [[None] * 3 for _ in range(3)]
        for i, p in enumerate(seg.phases):
            for j, q in enumerate(seg.phases):
                rows[int(p)][int(q)] = [float(z_ohm[i, j].real), float(z_ohm[i, j].imag)]
        segments.append(
            {
                "from": seg.from_bus,
                "to": seg.to_bus,
                "phases": phase_string(seg.phases),
                "impedance": rows,
            }
        )

    pv_units = []
    for unit in feeder.pv_units:
        entry = {
            "id": unit.id,
            "bus": unit.bus,
            "phases": phase_string(unit.phases),
            "rating_kva": float(unit.rating_kva),
        }
        if unit.p_rated_kw is not None:
            entry["p_rated_kw"] = float(unit.p_rated_kw)
        pv_units.append(entry)

    return {
        "name": feeder.name,
        "root": feeder.root,
        "bases": {"kva": float(feeder.base_kva), "kv_ll": kv},
        "substation": {"v_pu": float(feeder.v_substation)},
        "buses": buses,
        "segments": segments,
        "pv_units": pv_units,
    }
