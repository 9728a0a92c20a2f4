#!/usr/bin/env python3
"""
相位规则校验
"""
from core.signal_rules import StepDurations, validate_schedule
from core.traffic import Indication, SignalSchedule

G, W, Y, R = Indication.GREEN, Indication.WHITE, Indication.YELLOW, Indication.RED


def _schedule(a: list[Indication], b: list[Indication]) -> SignalSchedule:
    return SignalSchedule.from_indications(("A", "B"), 0, [{"A": x, "B": y} for x, y in zip(a, b)])


def _rules(schedule, scene, params) -> set[str]:
    return {v.rule for v in validate_schedule(schedule, scene, params)}


def test_step_durations(scene, params):
    d = StepDurations.from_params(scene, params)
    assert d.yellow == 2
    assert d.all_red == 1
    assert d.max_green == 10
    assert d.min_active == {"A": 2, "B": 2}
    assert d.min_white == {"A": 2, "B": 2}


def test_all_red_is_legal(scene, params):
    assert validate_schedule(SignalSchedule.all_red(scene.lane_ids, 0, 6), scene, params) == []


def test_hand_built_cycle_is_legal(scene, params):
    schedule = _schedule([G, G, Y, Y, R, R, R], [R, R, R, R, R, G, G])
    assert validate_schedule(schedule, scene, params) == []


def test_white_on_both_lanes_is_legal(scene, params):
    schedule = _schedule([W, W, W, Y, Y, R], [W, W, W, Y, Y, R])
    assert validate_schedule(schedule, scene, params) == []


def test_missing_yellow(scene, params):
    schedule = _schedule([G, G, R, R], [R, R, R, R])
    assert "green_to_yellow" in _rules(schedule, scene, params)


def test_white_must_end_in_yellow(scene, params):
    schedule = _schedule([W, W, R, R], [R, R, R, R])
    assert "white_to_yellow" in _rules(schedule, scene, params)


def test_conflicting_greens(scene, params):
    schedule = _schedule([G, G], [G, G])
    violations = validate_schedule(schedule, scene, params)
    assert any(v.rule == "conflict" and v.step == 0 for v in violations)


def test_green_with_conflicting_white(scene, params):
    schedule = _schedule([G, G], [W, W])
    assert "conflict" in _rules(schedule, scene, params)


def test_green_shorter_than_minimum(scene, params):
    schedule = _schedule([G, Y, Y, R], [R, R, R, R])
    assert "min_active" in _rules(schedule, scene, params)


def test_yellow_too_long(scene, params):
    schedule = _schedule([G, G, Y, Y, Y, R], [R] * 6)
    assert "max_yellow" in _rules(schedule, scene, params)


def test_yellow_after_red(scene, params):
    schedule = _schedule([R, Y, Y, R], [R] * 4)
    assert "yellow_source" in _rules(schedule, scene, params)


def test_green_too_long(scene, params):
    schedule = _schedule([G] * 12 + [Y, Y], [R] * 14)
    assert "max_green" in _rules(schedule, scene, params)


def test_no_all_red_clearance(scene, params):
    schedule = _schedule([G, G, Y, Y, R, R], [R, R, R, R, G, G])
    assert "all_red" in _rules(schedule, scene, params)

