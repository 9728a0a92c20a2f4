#!/usr/bin/env python3
"""
闭环仿真与结果文件
"""
import pandas as pd
import pytest
import yaml

from core.config_manager import override_scenario
from core.errors import ProgramError
from core.signal_rules import validate_schedule
from core.sim_log import TIMING_COLUMNS, TRAJECTORY_COLUMNS, read_csv, write_log, write_metrics
from core.controller import Simulation, run_study


@pytest.mark.parametrize("controller", ["actuated", "fixed_time"])
def test_baseline_run_is_legal(toy, controller):
    log = run_study(toy, controller)
    assert log.history.steps == toy.params.study_steps // toy.params.steps_per_signal
    assert validate_schedule(log.history, toy.scene, toy.params) == []
    assert not log.history.bits[1].any()
    assert len(log.steps) == toy.params.study_steps
    assert log.iterations().empty
    assert log.metadata["controller"] == controller
    assert log.metadata["config_hash"] == toy.config_hash


def test_baseline_run_is_deterministic(toy):
    first = run_study(toy, "actuated", seed=5).trajectories()
    second = run_study(toy, "actuated", seed=5).trajectories()
    pd.testing.assert_frame_equal(first, second)


def test_vehicles_stay_inside_physical_limits(toy):
    longer = override_scenario(toy, study_period=60.0)
    frame = run_study(longer, "fixed_time").trajectories()
    p = toy.params
    assert list(frame.columns) == TRAJECTORY_COLUMNS
    assert not frame.empty
    assert frame["v"].min() >= -1e-6
    assert frame["v"].max() <= p.speed_max + 1e-6
    assert frame["a"].between(p.accel_min - 1e-6, p.accel_max + 1e-6).all()


def test_write_log(toy, tmp_path):
    log = run_study(toy, "actuated")
    paths = write_log(log, tmp_path / "run")
    assert set(paths) == {"trajectories", "signals", "vehicles", "iterations", "timing", "metadata"}
    first = paths["trajectories"].read_text(encoding="utf-8").splitlines()[0]
    assert first == f"# config_hash={toy.config_hash} seed={toy.demand.seed}"
    frame = read_csv(paths["trajectories"])
    assert list(frame.columns) == TRAJECTORY_COLUMNS
    assert len(frame) == len(log.trajectory_rows)
    assert list(read_csv(paths["timing"]).columns) == TIMING_COLUMNS
    metadata = yaml.safe_load(paths["metadata"].read_text(encoding="utf-8"))
    assert metadata["traj_step"] == toy.params.traj_step

    path = write_metrics({"total_delay": 1.5}, tmp_path / "run", log.metadata)
    payload = yaml.safe_load(path.read_text(encoding="utf-8"))
    assert payload == {"config_hash": toy.config_hash, "seed": toy.demand.seed, "total_delay": 1.5}


def test_unknown_controller(toy):
    with pytest.raises(ValueError):
        Simulation(toy, "coin_flip")


def test_program_at_rejects_baselines_and_bad_steps(toy):
    with pytest.raises(ProgramError):
        Simulation(toy, "actuated").program_at(0, 1)
    with pytest.raises(ProgramError):
        Simulation(toy, "white").program_at(toy.params.study_steps, 1)


@pytest.mark.slow
def test_white_run_without_cavs_shows_no_white(toy):
    log = run_study(toy, "white", penetration=0.0)
    assert validate_schedule(log.history, toy.scene, toy.params) == []
    assert not log.history.bits[1].any()


@pytest.mark.slow
def test_white_run_is_legal(toy):
    log = run_study(toy, "white", penetration=1.0)
    assert validate_schedule(log.history, toy.scene, toy.params) == []
    assert not log.iterations().empty
    assert set(log.timing()["mode"]) <= {"joint", "trajectories_only"}
