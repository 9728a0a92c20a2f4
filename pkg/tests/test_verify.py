#!/usr/bin/env python3
"""
验收测试组
"""
import pytest

from core.traffic import VehicleKind
from core.verify import BATTERIES, chv_fidelity, convergence, run_battery, two_group_snapshot


def test_unknown_battery():
    with pytest.raises(ValueError):
        run_battery("smoke")


def test_simulation_batteries_need_a_scenario():
    with pytest.raises(ValueError):
        run_battery("signal_legality")


def test_solver_oracle_through_runner():
    report = run_battery("solver_oracle", seeds=range(1, 4))
    assert report.name == "solver_oracle"
    assert report.cases == 3
    payload = report.as_dict()
    assert payload["passed"] is True
    assert payload["wall_time"] >= 0.0


def test_signal_legality_on_baselines(toy):
    report = run_battery("signal_legality", toy, controllers=("fixed_time", "actuated"), penetrations=(0.5,),
                         study_period=None)
    assert report.cases == 2
    assert report.passed, report.failures


def test_two_group_snapshot(toy):
    snap = two_group_snapshot(toy)
    assert len(snap.vehicles) == 6
    assert [snap.vehicles[vid].kind for vid in snap.order["A"]] == [VehicleKind.CAV, VehicleKind.CHV, VehicleKind.CHV]
    assert snap.reference.steps == toy.params.signal_horizon
    assert snap.t0 == 0
    assert set(BATTERIES) >= {"solver_oracle", "convergence"}


@pytest.mark.slow
def test_chv_fidelity_small():
    report = chv_fidelity(contexts=3, seed=1)
    assert report.cases == 3
    assert report.passed, report.failures


@pytest.mark.slow
def test_convergence_on_toy(toy):
    report = convergence(toy)
    assert report.cases == 1
    assert "deltas" in report.details
