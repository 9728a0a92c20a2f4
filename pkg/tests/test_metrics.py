#!/usr/bin/env python3
"""
评价指标
"""
import pandas as pd
import pytest

from core.metrics import (
    activation_rate,
    comfort_stats,
    compute_metrics,
    count_stops,
    crossing_ttc,
    paired_comparison,
    rear_end_ttc,
    safety_violations,
    summary_row,
    sweep_table,
    delay_vs_penetration,
    ttc_long_table,
    white_share,
    white_time_share,
)
from core.sim_log import TRAJECTORY_COLUMNS, SimulationLog
from core.traffic import Indication, SignalSchedule


def _log(rows, history=None) -> SimulationLog:
    history = history if history is not None else SignalSchedule.all_red(("A", "B"), 0, 2)
    return SimulationLog(metadata={"traj_step": 0.5, "study_period": 2.0, "config_hash": "x", "seed": 1},
                         history=history, trajectory_rows=list(rows))


def _frame(rows) -> pd.DataFrame:
    return pd.DataFrame(rows, columns=TRAJECTORY_COLUMNS)


@pytest.mark.parametrize("speeds, expected", [
    ([0.0] * 4, 1),
    ([0.0, 0.0, 5.0, 0.0, 0.0], 2),
    ([0.0, 5.0, 0.0], 0),
    ([10.0] * 5, 0),
])
def test_count_stops(speeds, expected):
    assert count_stops(speeds, 0.5) == expected


def test_rear_end_ttc():
    frame = _frame([(0, 0.0, 1, "A", "CAV", 163.0, 10.0, 0.0),
                    (0, 0.0, 2, "A", "CHV", 100.0, 20.0, 0.0)])
    events = rear_end_ttc(frame, 13.0, 6.0)
    assert len(events) == 1
    assert events.loc[0, "ttc"] == pytest.approx(5.0)
    assert (events.loc[0, "vehicle"], events.loc[0, "other"]) == (2, 1)
    assert rear_end_ttc(frame, 13.0, 4.0).empty


def test_rear_end_ignores_opening_gap():
    frame = _frame([(0, 0.0, 1, "A", "CAV", 163.0, 20.0, 0.0),
                    (0, 0.0, 2, "A", "CHV", 100.0, 20.0, 0.0)])
    assert rear_end_ttc(frame, 13.0, 6.0).empty


def test_crossing_ttc(scene):
    frame = _frame([(0, 0.0, 1, "A", "CAV", 204.0, 20.0, 0.0),
                    (0, 0.0, 2, "B", "CAV", 210.0, 20.0, 0.0)])
    events = crossing_ttc(frame, scene, 13.0, 5.0)
    assert len(events) == 1
    assert events.loc[0, "ttc"] == pytest.approx(1.0)
    late = _frame([(0, 0.0, 1, "A", "CAV", 204.0, 20.0, 0.0),
                   (0, 0.0, 2, "B", "CAV", 150.0, 20.0, 0.0)])
    assert crossing_ttc(late, scene, 13.0, 5.0).empty


def test_safety_violations_flags_overlap(scene, params):
    log = _log([(0, 0.0, 1, "A", "CAV", 120.0, 10.0, 0.0),
                (0, 0.0, 2, "A", "CHV", 110.0, 10.0, 0.0)])
    found = safety_violations(log, scene, params)
    assert list(found["kind"]) == ["overlap"]
    assert safety_violations(_log([]), scene, params).empty


def test_comfort_jerk():
    rows = [(t, t * 0.5, 1, "A", "CAV", 100.0 + t, 20.0, a) for t, a in enumerate([1.0, -1.0, 1.0, -1.0])]
    stats = comfort_stats(_log(rows))
    assert stats.loc["CAV", "pos_jerk_mean"] == pytest.approx(4.0)
    assert stats.loc["CAV", "neg_jerk_mean"] == pytest.approx(-4.0)
    assert stats.loc["CAV", "accel_mean"] == pytest.approx(1.0)
    assert stats.loc["CAV", "speed_sd"] == pytest.approx(0.0)


def test_signal_shares():
    assert white_share(_log([])) == 0.0
    assert white_time_share(_log([])) == 0.0
    history = SignalSchedule.from_indications(("A", "B"), 0, [
        {"A": Indication.WHITE, "B": Indication.WHITE},
        {"A": Indication.GREEN, "B": Indication.RED},
    ])
    log = _log([], history)
    assert white_share(log) == pytest.approx(2 / 3)
    assert white_time_share(log) == pytest.approx(0.5)
    rates = activation_rate(log)
    assert rates.loc["A", "white"] == pytest.approx(0.5)
    assert rates.loc["B", "red"] == pytest.approx(0.5)


def test_compute_metrics_on_empty_run(scene, params):
    metrics = compute_metrics(_log([]), scene, params)
    assert metrics.vehicles == 0
    assert metrics.total_delay == 0.0
    assert metrics.signal_violations == 0
    assert metrics.rear_end_ttc["count"] == 0
    row = summary_row("white", 0.5, 1, metrics)
    assert row["near_rear_end"] == 0
    assert "comfort" in metrics.as_dict()


def _table() -> pd.DataFrame:
    rows = []
    for controller, delay in (("white", 50.0), ("actuated", 100.0)):
        for seed in (1, 2):
            rows.append({"controller": controller, "penetration": 0.5, "seed": seed, "total_delay": delay,
                         "average_delay": delay / 10})
    return sweep_table(rows)


def test_sweep_views():
    table = _table()
    assert list(table["controller"]) == ["actuated", "actuated", "white", "white"]
    delays = delay_vs_penetration(table)
    assert delays.loc[delays["controller"] == "white", "average_delay"].item() == pytest.approx(5.0)


def test_paired_comparison():
    paired = paired_comparison(_table(), "white", "actuated")
    assert paired.loc[0, "reduction"] == pytest.approx(0.5)
    assert list(paired.columns) == ["penetration", "white", "actuated", "reduction"]
    assert paired_comparison(_table(), "white", "fixed_time").empty


def test_ttc_long_table():
    empty = ttc_long_table([])
    assert list(empty.columns) == ["ttc", "conflict", "controller", "penetration", "seed"]
    frame = pd.DataFrame({"ttc": [1.0, 2.0], "conflict": ["rear_end", "crossing"]})
    table = ttc_long_table([({"controller": "white", "penetration": 0.5, "seed": 1}, frame)])
    assert len(table) == 2
    assert set(table["controller"]) == {"white"}
