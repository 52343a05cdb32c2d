from pathlib import Path

import numpy as np
import pytest

from model.feeder import Bus, Feeder, LineSegment, Phase, PvUnit
from parsers.feeder_parser import load_feeder

FEEDER_DIR = Path(__file__).resolve().parent.parent / "feeders"

A, B, C = Phase.A, Phase.B, Phase.C


def bundled(name: str) -> Feeder:
    return load_feeder(FEEDER_DIR / f"{name}.json")


@pytest.fixture(scope="session")
def twobus():
    return bundled("twobus")


@pytest.fixture(scope="session")
def chain5():
    return bundled("chain5")


@pytest.fixture(scope="session")
def tree25():
    return bundled("tree25_pv")


@pytest.fixture(scope="session")
def ieee13():
    return bundled("ieee13_like")


@pytest.fixture(scope="session")
def long_lateral():
    return bundled("long_lateral")


def single_phase_line(r=0.01, x=0.02, pv_kva=None):
    """Substation `s` feeding bus `l` on phase A; impedance already in pu."""
    buses = {
        "s": Bus("s", (A,), nominal_voltage=6928.2),
        "l": Bus("l", (A,), nominal_voltage=6928.2),
    }
    seg = LineSegment("s", "l", (A,), np.array([[complex(r, x)]]))
    units = (PvUnit("pv", "l", (A,), pv_kva),) if pv_kva else ()
    return Feeder(name="line", root="s", buses=buses, segments=(seg,), pv_units=units)


def single_phase_chain(n=2, r=0.01, x=0.02):
    """s -> b1 -> ... -> bn on phase A with identical segments."""
    names = ["s"] + [f"b{k}" for k in range(1, n + 1)]
    buses = {b: Bus(b, (A,), nominal_voltage=6928.2) for b in names}
    segs = tuple(
        LineSegment(names[k - 1], names[k], (A,), np.array([[complex(r, x)]])) for k in range(1, n + 1)
    )
    return Feeder(name=f"chain{n}", root="s", buses=buses, segments=segs)


@pytest.fixture
def line():
    return single_phase_line()


@pytest.fixture
def chain2():
    return single_phase_chain(2)
