#!/usr/bin/env python3
"""
交叉口几何与到达生成
"""
import pytest

from core.config_manager import override_scenario
from core.errors import ScenarioError
from core.scene import IntersectionScene, LaneSpec, generate_arrivals, standard_four_leg, validate_scene
from core.traffic import VehicleKind


def test_standard_layout_has_eight_lanes():
    scene = standard_four_leg()
    assert len(scene.lanes) == 8
    assert {lane.id for lane in scene.lanes} == {f"{a}_{m}" for a in ("EB", "NB", "WB", "SB") for m in "TL"}


def test_standard_conflicts_are_symmetric_and_downstream():
    scene = standard_four_leg()
    for lane, other in scene.pairs():
        assert lane in scene.conflicts(other)
        assert scene.conflict_point(lane, other) > scene.stop_bar
        assert scene.lane(lane).destination > scene.conflict_point(lane, other)


def test_standard_conflict_pattern():
    scene = standard_four_leg()
    assert "NB_T" in scene.conflicts("EB_T")
    assert "SB_T" in scene.conflicts("EB_T")
    assert "WB_T" not in scene.conflicts("EB_T")
    assert "WB_T" in scene.conflicts("EB_L")
    assert "EB_L" not in scene.conflicts("EB_T")


def test_standard_layout_is_rotation_invariant():
    scene = standard_four_leg()
    assert scene.conflict_point("EB_T", "NB_T") == pytest.approx(scene.conflict_point("NB_T", "WB_T"), abs=0.02)
    assert scene.conflict_point("EB_T", "NB_T") == pytest.approx(692.0, abs=0.02)
    assert scene.conflict_point("NB_T", "EB_T") == pytest.approx(656.0, abs=0.02)


def test_custom_scene(scene):
    assert scene.conflict_point("A", "B") == 224.0
    assert scene.conflict_point("B", "A") == 230.0
    assert scene.pairs() == [("A", "B"), ("B", "A")]
    assert scene.extent == 320.0


def test_asymmetric_conflicts_rejected():
    scene = IntersectionScene(
        lanes=(LaneSpec("A", "EB", "through", 400.0), LaneSpec("B", "NB", "through", 400.0)),
        stop_bar=200.0,
        conflict_sets={"A": frozenset({"B"}), "B": frozenset()},
        conflict_points={("A", "B"): 220.0, ("B", "A"): 220.0},
        detection_range=200.0,
    )
    with pytest.raises(ScenarioError):
        validate_scene(scene)


def test_conflict_before_stop_bar_rejected():
    scene = IntersectionScene(
        lanes=(LaneSpec("A", "EB", "through", 400.0), LaneSpec("B", "NB", "through", 400.0)),
        stop_bar=200.0,
        conflict_sets={"A": frozenset({"B"}), "B": frozenset({"A"})},
        conflict_points={("A", "B"): 150.0, ("B", "A"): 220.0},
        detection_range=200.0,
    )
    with pytest.raises(ScenarioError):
        validate_scene(scene)


@pytest.fixture
def long_toy(toy):
    return override_scenario(toy, study_period=200.0)


def test_arrivals_deterministic(long_toy):
    sc = long_toy
    first = generate_arrivals(sc.scene, sc.demand, sc.params)
    second = generate_arrivals(sc.scene, sc.demand, sc.params)
    assert first == second
    assert first
    times = [a.time for a in first]
    assert times == sorted(times)
    assert all(0.0 < t < sc.params.study_period for t in times)
    assert [a.vehicle_id for a in first] == list(range(len(first)))


def test_penetration_does_not_move_arrivals(long_toy):
    sc = long_toy
    base = generate_arrivals(sc.scene, sc.demand, sc.params)
    for penetration in (0.0, 1.0):
        other = override_scenario(sc, penetration=penetration)
        arrivals = generate_arrivals(other.scene, other.demand, other.params)
        assert [(a.time, a.lane) for a in arrivals] == [(a.time, a.lane) for a in base]
        expected = VehicleKind.CAV if penetration == 1.0 else VehicleKind.CHV
        assert all(a.kind is expected for a in arrivals)


def test_seed_changes_arrivals(long_toy):
    sc = long_toy
    other = override_scenario(sc, seed=sc.demand.seed + 1)
    assert generate_arrivals(sc.scene, sc.demand, sc.params) != generate_arrivals(other.scene, other.demand,
                                                                                   other.params)
