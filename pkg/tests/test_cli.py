#!/usr/bin/env python3
"""
命令行入口
"""
from typer.testing import CliRunner

from core.sim_log import read_csv
from core.version import VERSION
from main import app
from tests.conftest import SCENARIOS

runner = CliRunner()
TOY = str(SCENARIOS / "toy_two_lane.yaml")


def test_version():
    result = runner.invoke(app, ["version"])
    assert result.exit_code == 0
    assert VERSION in result.output
    assert "native" in result.output


def test_unknown_battery_exits_with_error(tmp_path):
    result = runner.invoke(app, ["verify", "--battery", "smoke", "--out", str(tmp_path)])
    assert result.exit_code == 1


def test_unknown_controller_exits_with_error(tmp_path):
    result = runner.invoke(app, ["run", "-s", TOY, "-c", "coin_flip", "-o", str(tmp_path)])
    assert result.exit_code == 1


def test_export_lp_rejects_baselines(tmp_path):
    result = runner.invoke(app, ["export-lp", "-t", "0", "-v", "1", "-s", TOY, "-c", "actuated",
                                 "-o", str(tmp_path / "p.lp")])
    assert result.exit_code == 1
    assert not (tmp_path / "p.lp").exists()


def test_run_baseline_sweep(tmp_path):
    result = runner.invoke(app, ["run", "-s", TOY, "-c", "actuated,fixed_time", "-p", "50", "--seed", "1",
                                 "--seed", "1", "-o", str(tmp_path), "--log-level", "warning"])
    assert result.exit_code == 0, result.output
    summary = read_csv(tmp_path / "summary.csv")
    assert len(summary) == 2
    assert set(summary["penetration"]) == {0.5}
    assert (tmp_path / "actuated" / "p050" / "seed1" / "trajectories.csv").exists()
