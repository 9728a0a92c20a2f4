#!/usr/bin/env python3
"""
实验单元调度与扫描汇总
"""
from pathlib import Path

import pytest

from core.errors import CellError
from core.sim_log import read_csv
from core.task_manager import CellRunner, CellStatus, cell_dir, run_cell, write_sweep
from models.experiment_schema import ExperimentPlan, RuntimeSettings
from tests.conftest import SCENARIOS

TOY = SCENARIOS / "toy_two_lane.yaml"
QUIET = RuntimeSettings(log_level="WARNING")


def test_cell_dir():
    assert cell_dir(Path("runs"), "white", 0.3, 2) == Path("runs/white/p030/seed2")
    assert cell_dir(Path("runs"), "actuated", 1.0, 1) == Path("runs/actuated/p100/seed1")


def test_run_cell_writes_results(tmp_path):
    out = tmp_path / "cell"
    row = run_cell(str(TOY), "fixed_time", 0.5, 3, str(out), settings=QUIET.model_dump())
    assert row["controller"] == "fixed_time" and row["seed"] == 3
    assert row["signal_violations"] == 0
    for name in ("trajectories.csv", "signals.csv", "vehicles.csv", "timing.csv", "ttc.csv", "comfort.csv",
                 "metrics.yaml", "metadata.yaml", "run.log"):
        assert (out / name).exists(), name


def test_run_cell_wraps_failures(tmp_path):
    with pytest.raises(CellError):
        run_cell(str(TOY), "coin_flip", 0.5, 1, str(tmp_path / "bad"), settings=QUIET.model_dump())


def test_runner_and_sweep(tmp_path):
    plan = ExperimentPlan(scenario=TOY, controllers=["actuated", "fixed_time"], penetrations=[0.5], seeds=[1, 2],
                          out=tmp_path, jobs=1)
    runner = CellRunner(plan, QUIET)
    seen = []
    cells = runner.run(lambda cell: seen.append(cell.status))
    assert all(cell.status == CellStatus.COMPLETED for cell in cells)
    assert runner.get_cell_count()["completed"] == 4
    assert not runner.failed()
    assert seen.count(CellStatus.RUNNING) == 4

    paths = write_sweep(cells, tmp_path, {"config_hash": "abc", "seed": "1,2"})
    assert {"summary", "delay_vs_penetration", "activation_vs_penetration", "ttc", "comfort"} <= set(paths)
    assert "baseline_actuated" not in paths
    assert paths["summary"].read_text(encoding="utf-8").startswith("# config_hash=abc seed=1,2\n")
    summary = read_csv(paths["summary"])
    assert len(summary) == 4
    assert list(summary["controller"]) == ["actuated", "actuated", "fixed_time", "fixed_time"]


def test_write_sweep_without_cells(tmp_path):
    paths = write_sweep([], tmp_path, {"config_hash": "abc", "seed": "1"})
    assert read_csv(paths["summary"]).empty
    assert "comfort" not in paths
