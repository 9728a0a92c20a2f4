#!/usr/bin/env python3
"""
场景文件读取、校验与覆盖
"""
import pytest
import yaml

from core.config_manager import config_hash, dump_scenario, load_scenario, override_scenario, parse_scenario
from core.errors import ScenarioError
from tests.conftest import SCENARIOS


def test_toy_grid(toy):
    p = toy.params
    assert toy.name == "toy_two_lane"
    assert p.steps_per_signal == 4
    assert p.horizon_steps == 8
    assert p.signal_horizon == 2
    assert p.study_steps == 40
    assert toy.scene.lane_ids == ("A", "B")


def test_defaults_follow_parameter_table(toy):
    p = toy.params
    assert (p.accel_min, p.accel_max, p.speed_max) == (-11.5, 13.0, 42.5)
    assert (p.vehicle_length, p.same_lane_gap, p.stopbar_gap) == (13.0, 11.8, 1.0)
    assert (p.alpha1, p.alpha2, p.chv_reaction, p.cav_reaction) == (0.95, 0.25, 1.0, 0.1)
    assert (p.yellow, p.all_red) == (4.0, 2.0)


@pytest.mark.parametrize("name", ["default", "calibration", "demand_level_1", "demand_level_2", "demand_level_3"])
def test_bundled_scenarios_load(name):
    scenario = load_scenario(SCENARIOS / f"{name}.yaml")
    assert len(scenario.config_hash) == 64


def test_missing_file_raises(tmp_path):
    with pytest.raises(ScenarioError):
        load_scenario(tmp_path / "nope.yaml")


def test_non_mapping_file_raises(tmp_path):
    path = tmp_path / "list.yaml"
    path.write_text("- 1\n- 2\n", encoding="utf-8")
    with pytest.raises(ScenarioError):
        load_scenario(path)


@pytest.mark.parametrize("data", [
    {"parameters": {"traj_step": 0.3}},
    {"parameters": {"max_group_length": 100.0}},
    {"parameters": {"speed_min": 50.0}},
    {"parameters": {"unknown_knob": 1}},
    {"demand": {"demand_level": 7}},
    {"demand": {"penetration": 1.5}},
    {"baseline": {"splits": {"EW_left": 10.0}}},
])
def test_invalid_values_rejected(data):
    with pytest.raises(ScenarioError):
        parse_scenario(data)


def test_dump_round_trip_keeps_hash(toy):
    text = dump_scenario(toy.schema)
    again = parse_scenario(yaml.safe_load(text))
    assert again == toy.schema
    assert config_hash(again) == toy.config_hash


def test_hash_changes_with_seed(toy):
    other = override_scenario(toy, seed=toy.demand.seed + 1)
    assert other.config_hash != toy.config_hash
    assert override_scenario(toy).config_hash == toy.config_hash


def test_demand_level_override_clears_explicit_rate(toy):
    assert toy.demand.resolved_through_rate == 400.0
    other = override_scenario(toy, demand_level=1, penetration=0.3, study_period=40.0)
    assert other.demand.resolved_through_rate == 500.0
    assert other.demand.penetration == 0.3
    assert other.params.study_steps == 80
