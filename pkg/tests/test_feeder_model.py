import dataclasses

import numpy as np
import pytest

from model.errors import FeederValidationError, UnknownBusError
from model.feeder import Bus, Feeder, LineSegment, Phase, PvUnit, validate

from conftest import single_phase_chain, single_phase_line

A, B, C = Phase.A, Phase.B, Phase.C


def codes(feeder):
    return {v.code for v in validate(feeder)}


def test_phase_ordering_is_total():
    assert sorted([C, A, B]) == [A, B, C]
    assert len(list(Phase)) == 3


def test_children_sorted_and_leaf_empty(tree25):
    assert tree25.children("n05") == ["l05a", "l05b", "n06"]
    assert tree25.children("l08c") == []


def test_children_of_unknown_bus_raises(tree25):
    with pytest.raises(UnknownBusError):
        tree25.children("nope")


def test_path_to_root_runs_from_substation(tree25):
    path = tree25.path_to_root("l04c")
    assert [s.to_bus for s in path] == ["n01", "n02", "n03", "n04", "l04a", "l04b", "l04c"]
    assert path[0].from_bus == tree25.root
    assert tree25.path_to_root(tree25.root) == []


def test_path_to_root_two_segment_chain():
    feeder = single_phase_chain(2)
    assert [s.name for s in feeder.path_to_root("b2")] == ["s->b1", "b1->b2"]
    assert feeder.depth("b2") == 2


def test_bundled_feeders_validate(twobus, chain5, tree25, ieee13, long_lateral):
    for feeder in (twobus, chain5, tree25, ieee13, long_lateral):
        assert validate(feeder) == []
        assert feeder.checked() is feeder


def test_tree25_shape(tree25):
    assert len(tree25.buses) == 25
    assert len(tree25.pv_units) == 8
    assert len(tree25.segments) == 24


def test_cycle_reported_as_not_a_tree():
    feeder = single_phase_chain(2)
    back = LineSegment("b2", "b1", (A,), np.array([[0.01 + 0.02j]]))
    cyclic = dataclasses.replace(feeder, segments=feeder.segments + (back,))
    problems = validate(cyclic)
    assert any(v.code == "not_a_tree" and "not a tree" in v.message for v in problems)
    assert "multiple_parents" in {v.code for v in problems}


def test_phase_mismatch_reported():
    feeder = single_phase_line()
    buses = dict(feeder.buses)
    buses["l"] = Bus("l", (A, B), nominal_voltage=6928.2)
    assert "phase_mismatch" in codes(dataclasses.replace(feeder, buses=buses))


def test_zero_reactance_rejected():
    feeder = single_phase_line(r=0.01, x=0.0)
    assert "zero_reactance" in codes(feeder)


def test_unreachable_and_unknown_bus():
    feeder = single_phase_chain(1)
    buses = dict(feeder.buses)
    buses["island"] = Bus("island", (A,), nominal_voltage=6928.2)
    assert "unreachable" in codes(dataclasses.replace(feeder, buses=buses))

    dangling = LineSegment("b1", "ghost", (A,), np.array([[0.01 + 0.02j]]))
    assert "unknown_bus" in codes(dataclasses.replace(feeder, segments=feeder.segments + (dangling,)))


def test_root_with_parent_reported():
    feeder = single_phase_chain(1)
    back = LineSegment("b1", "s", (A,), np.array([[0.01 + 0.02j]]))
    assert "root_has_parent" in codes(dataclasses.replace(feeder, segments=feeder.segments + (back,)))


def test_pv_checks():
    feeder = single_phase_line()
    bad_phase = PvUnit("pv", "l", (B,), 10.0)
    assert "pv_phase" in codes(dataclasses.replace(feeder, pv_units=(bad_phase,)))
    twice = (PvUnit("p1", "l", (A,), 10.0), PvUnit("p2", "l", (A,), 10.0))
    assert "duplicate_pv" in codes(dataclasses.replace(feeder, pv_units=twice))
    oversized = PvUnit("pv", "l", (A,), 10.0, p_rated_kw=12.0)
    assert "bad_rating" in codes(dataclasses.replace(feeder, pv_units=(oversized,)))


def test_checked_raises_with_all_violations():
    feeder = single_phase_line(x=0.0)
    with pytest.raises(FeederValidationError) as info:
        feeder.checked()
    assert [v.code for v in info.value.violations] == ["zero_reactance"]


def test_pv_ratings_split_per_phase():
    unit = PvUnit("pv", "b", (A, B, C), 69.0)
    assert unit.phase_rating_kva == pytest.approx(23.0)
    assert unit.phase_p_rated_kw == pytest.approx(23.0)
    oversized = PvUnit("pv", "b", (A, B, C), 345.0, p_rated_kw=300.0)
    assert oversized.phase_p_rated_kw == pytest.approx(100.0)


def test_descendants_include_self(tree25):
    assert tree25.descendants("n08") == ["l08a", "l08b", "l08c", "n08"]
    assert len(tree25.descendants(tree25.root)) == 25


def test_feeder_base_helpers(twobus, ieee13):
    assert twobus.phase_base_kva == pytest.approx(1000.0)
    assert twobus.z_base() == pytest.approx(48.0)
    assert ieee13.z_base() == pytest.approx(4.16 ** 2 * 1000.0 / 3000.0)


def test_empty_feeder_is_not_silently_valid():
    feeder = Feeder(name="empty", root="s", buses={}, segments=())
    assert "unknown_bus" in codes(feeder)


def random_tree(n=20, seed=0):
    rng = np.random.default_rng(seed)
    names = [f"b{k}" for k in range(n)]
    parents = {names[k]: names[int(rng.integers(0, k))] for k in range(1, n)}
    buses = {b: Bus(b, (A,), nominal_voltage=6928.2) for b in names}
    segs = tuple(LineSegment(parents[b], b, (A,), np.array([[0.01 + 0.02j]])) for b in names[1:])
    return Feeder(name="random", root="b0", buses=buses, segments=segs), parents


@pytest.mark.parametrize("seed", range(5))
def test_path_to_root_on_random_tree(seed):
    feeder, parents = random_tree(seed=seed)
    assert not validate(feeder)
    for bus in feeder.buses:
        hops, current = 0, bus
        while current != "b0":
            current = parents[current]
            hops += 1
        path = feeder.path_to_root(bus)
        visited = [feeder.root] + [s.to_bus for s in path]
        assert visited[0] == "b0" and visited[-1] == bus
        assert len(set(visited)) == len(visited)
        assert len(visited) == feeder.depth(bus) + 1 == hops + 1
        assert all(a.to_bus == b.from_bus for a, b in zip(path, path[1:]))


@pytest.mark.parametrize("name", ["twobus", "chain5", "tree25", "ieee13", "long_lateral"])
def test_children_cover_every_segment_once(name, request):
    feeder = request.getfixturevalue(name)
    assert sum(len(feeder.children(b)) for b in feeder.buses) == len(feeder.segments)


def test_children_cover_every_segment_on_random_tree():
    feeder, _ = random_tree(seed=7)
    assert sum(len(feeder.children(b)) for b in feeder.buses) == len(feeder.segments) == 19


def test_long_lateral_shape(long_lateral):
    assert len(long_lateral.buses) == 64
    assert long_lateral.depth("t24") == 24
    assert long_lateral.depth("t15b") == 17
    assert sorted(u.bus for u in long_lateral.pv_units) == [f"t{k:02d}" for k in range(3, 25, 3)]
