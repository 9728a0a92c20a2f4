#!/usr/bin/env python3
"""
测试公共夹具
"""
from pathlib import Path

import pytest

from core.config_manager import load_scenario
from core.logger import set_log_level
from core.traffic import SignalSchedule

ROOT = Path(__file__).resolve().parent.parent
SCENARIOS = ROOT / "scenarios"


@pytest.fixture(autouse=True, scope="session")
def quiet_logs():
    set_log_level("WARNING")


@pytest.fixture
def toy():
    """两条冲突车道的小场景：A 为东进口直行，B 为北进口左转"""
    return load_scenario(SCENARIOS / "toy_two_lane.yaml")


@pytest.fixture
def scene(toy):
    return toy.scene


@pytest.fixture
def params(toy):
    return toy.params


@pytest.fixture
def empty_history(scene):
    return SignalSchedule.all_red(scene.lane_ids, 0, 0)
