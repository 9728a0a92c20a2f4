#!/usr/bin/env python3
"""
基准信号控制：感应控制与定时控制
"""
from core.actuated import (
    RING_1,
    RING_2,
    ActuatedController,
    DetectorState,
    FixedTimeController,
    actuated_baseline_step,
    phase_lanes,
)
from core.signal_rules import validate_schedule
from core.traffic import Indication, SignalSchedule

G = Indication.GREEN


def _drive(controller, scene, detectors, steps: int) -> SignalSchedule:
    history = SignalSchedule.all_red(scene.lane_ids, 0, 0)
    for _ in range(steps):
        history = history.concat(controller.step(history, detectors))
    return history


def _greens(history: SignalSchedule, lane: str) -> list[int]:
    return [n for n in range(history.start, history.end) if history.indication(lane, n) is G]


def test_phase_mapping(toy):
    assert phase_lanes(toy.scene, RING_1) == [[], ["A"], [], []]
    assert phase_lanes(toy.scene, RING_2) == [[], [], ["B"], []]


def test_fixed_time_cycles_both_lanes(toy):
    controller = FixedTimeController(toy.scene, toy.params, toy.baseline)
    history = _drive(controller, toy.scene, None, 30)
    assert history.steps == 30
    assert validate_schedule(history, toy.scene, toy.params) == []
    assert _greens(history, "A")[0] == 0
    assert _greens(history, "B")
    assert not history.bits[1].any()


def test_actuated_serves_competing_calls(toy):
    controller = ActuatedController(toy.scene, toy.params, toy.baseline)
    detectors = {lane: DetectorState(presence=False, call=True) for lane in toy.scene.lane_ids}
    history = _drive(controller, toy.scene, detectors, 30)
    assert validate_schedule(history, toy.scene, toy.params) == []
    assert _greens(history, "A")
    assert _greens(history, "B")
    assert not history.bits[1].any()


def test_actuated_rests_in_green(toy):
    controller = ActuatedController(toy.scene, toy.params, toy.baseline)
    detectors = {"A": DetectorState(presence=True, call=True)}
    history = SignalSchedule.all_red(toy.scene.lane_ids, 0, 0)
    shown = []
    for _ in range(6):
        step = actuated_baseline_step(controller, history, detectors)
        assert set(step) == {"A", "B"}
        shown.append(step)
        history = history.concat(SignalSchedule.from_indications(toy.scene.lane_ids, history.end, [step]))
    assert [s["A"] for s in shown] == [G] * 6
    assert all(s["B"] is Indication.RED for s in shown)


def test_no_calls_keeps_all_red(toy):
    controller = ActuatedController(toy.scene, toy.params, toy.baseline)
    history = _drive(controller, toy.scene, {}, 5)
    assert not history.bits.any()
