#!/usr/bin/env python3
"""
信号方案规划器
"""
import pytest

from core.errors import WhitePhaseError
from core.signal_planner import SignalPlanner
from core.signal_rules import validate_schedule
from core.traffic import Indication, SignalSchedule

G, W, Y, R = Indication.GREEN, Indication.WHITE, Indication.YELLOW, Indication.RED


@pytest.fixture
def planner(scene, params):
    return SignalPlanner(scene, params)


def _column(schedule: SignalSchedule, lane: str) -> list[Indication]:
    return [schedule.indication(lane, n) for n in range(schedule.start, schedule.end)]


def test_green_from_all_red(planner, empty_history):
    plan = planner.plan(empty_history, 6, {"A": G})
    assert plan is not None
    assert plan.start == 0 and plan.steps == 6
    assert _column(plan, "A") == [G] * 6
    assert _column(plan, "B") == [R] * 6


def test_switch_inserts_yellow_and_all_red(planner, empty_history, scene, params):
    first = planner.plan(empty_history, 6, {"A": G})
    second = planner.plan(first, 6, {"B": G})
    assert second.start == 6
    assert _column(second, "A") == [Y, Y, R, R, R, R]
    assert _column(second, "B") == [R, R, R, G, G, G]
    assert validate_schedule(first.concat(second), scene, params) == []


def test_hold_keeps_active_lanes(planner, empty_history):
    history = planner.plan(empty_history, 3, {"A": G})
    held = planner.extend(history, None, 4)
    assert held.start == 3
    assert _column(held, "A") == [G] * 4


def test_extend_reuses_previous_plan(planner, empty_history):
    history = planner.plan(empty_history, 2, {"A": G})
    previous = planner.plan(history, 6, {"B": G})
    extended = planner.extend(history.concat(previous.window(2, 3)), previous, 3)
    assert extended.start == 3
    assert _column(extended, "A") == _column(previous.window(3, 6), "A")
    assert _column(extended, "B") == _column(previous.window(3, 6), "B")


def test_green_ends_at_max_green(planner, empty_history):
    plan = planner.plan(empty_history, 13, {"A": G})
    column = _column(plan, "A")
    assert column[:10] == [G] * 10
    assert column[10:12] == [Y, Y]


def test_concurrent_white(planner, empty_history, scene, params):
    plan = planner.plan(empty_history, 4, {"A": W, "B": W})
    assert _column(plan, "A") == [W] * 4
    assert _column(plan, "B") == [W] * 4
    assert validate_schedule(plan, scene, params) == []


def test_white_needs_permission(planner, empty_history):
    plan = planner.plan(empty_history, 3, {"A": W}, white_start_ok=())
    assert _column(plan, "A") == [R] * 3


def test_is_legal_rejects_conflict(planner, empty_history):
    bad = SignalSchedule.from_indications(("A", "B"), 0, [{"A": G, "B": G}])
    assert not planner.is_legal(empty_history, bad)


def test_candidates_are_legal_and_distinct(planner, empty_history):
    cands = planner.candidates(empty_history, 2, ["A", "B"])
    assert len(cands) >= 3
    for i, cand in enumerate(cands):
        assert cand.start == 0 and cand.steps == 2
        assert planner.is_legal(empty_history, cand)
        assert not any(cand.same_as(other) for other in cands[i + 1:])
    assert any(cand.bits[1].any() for cand in cands)


def test_candidates_without_white(planner, empty_history):
    cands = planner.candidates(empty_history, 2, ["A", "B"], allow_white=False)
    assert cands
    assert not any(cand.bits[1].any() for cand in cands)


def test_candidate_limit(planner, empty_history):
    assert len(planner.candidates(empty_history, 2, ["A", "B"], limit=2)) == 2


def test_extend_raises_when_nothing_legal(planner, empty_history, monkeypatch):
    monkeypatch.setattr(planner, "plan", lambda *args, **kwargs: None)
    with pytest.raises(WhitePhaseError):
        planner.extend(empty_history, None, 2)
