import hashlib
import json
import math
from typing import Any, Iterable, Mapping, Tuple

from model.feeder import Phase

PACKAGE_VERSION = "0.1.0"


def safe_strip(text) -> str:
    if text is None:
        return ""
    return str(text).strip()


def parse_phases(raw) -> Tuple[Phase, ...]:
    """
    Accept "ABC", "a b", ["A", "C"] or a single Phase and return the
    phases sorted A, B, C with duplicates removed.
    Raises ValueError on anything that is not a phase label.
    """
    if isinstance(raw, Phase):
        return (raw,)
    if isinstance(raw, str):
        labels = [c for c in raw.upper() if not c.isspace() and c not in ",;"]
    elif isinstance(raw, (list, tuple)):
        labels = []
        for item in raw:
            if isinstance(item, Phase):
                labels.append(item.name)
            elif isinstance(item, str):
                labels.append(safe_strip(item).upper())
            else:
                raise ValueError(f"phase label must be a string, got {item!r}")
    else:
        raise ValueError(f"phases must be a string or a list, got {raw!r}")

    if not labels:
        raise ValueError("phase set is empty")

    phases = set()
    for label in labels:
        if label not in Phase.__members__:
            raise ValueError(f"unknown phase {label!r} (expected A, B or C)")
        phases.add(Phase[label])
    return tuple(sorted(phases))


def phase_string(phases: Iterable[Phase]) -> str:
    return "".join(p.name for p in sorted(phases))


def is_number(value: Any) -> bool:
    # bool is an int subclass; JSON true/false is never a quantity
    if isinstance(value, bool):
        return False
    return isinstance(value, (int, float)) and math.isfinite(value)


def stable_hash(payload: Mapping[str, Any], length: int = 12) -> str:
    """
    Short content hash of a JSON-serialisable mapping. Key order does not matter.
    """
    text = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:length]


def file_friendly_name(text: str) -> str:
    text = safe_strip(text)
    keep = [c if c.isalnum() or c in "-_." else "_" for c in text]
    return "".join(keep).strip("_") or "unnamed"
