#!/usr/bin/env python3
"""
车辆模型：CAV 轨迹模型、CHV 投票模型与投票聚合
"""
import numpy as np
import pytest

from core.chv_model import predict_chv_trajectory
from core.errors import ProgramError
from core.opt_engine import Budget
from core.signal_planner import SignalPlanner
from core.traffic import Indication, SignalSchedule, VehicleGroup, VehicleKind, cruise_trajectory
from core.vehicle_programs import (
    MODE_FIXED,
    MODE_FREE,
    SharedInputs,
    VehicleSnapshot,
    build_chv_vote_program,
    build_cav_program,
    build_vote_aggregation,
    reach_bounds,
)

BUDGET = Budget(nodes=5000, seconds=30.0)


def _inputs(scene, params, vehicles: list[VehicleSnapshot], schedule=None, t0: int = 0, votes=None):
    h, dt, b = params.horizon_steps, params.traj_step, scene.stop_bar
    order = {lane: [v.id for v in sorted(vehicles, key=lambda v: -v.x) if v.lane == lane] for lane in scene.lane_ids}
    n0 = t0 // params.steps_per_signal
    return SharedInputs(
        scene=scene, params=params, t0=t0, n0=n0,
        history=SignalSchedule.all_red(scene.lane_ids, 0, n0),
        vehicles={v.id: v for v in vehicles}, order=order,
        trajectories={v.id: cruise_trajectory(t0, v.x, v.v, h, dt, b) for v in vehicles},
        votes=votes or {}, schedule=schedule,
    )


def _fixed(scene, lane: str | None, steps: int = 2) -> SignalSchedule:
    schedule = SignalSchedule.all_red(scene.lane_ids, 0, steps)
    if lane is not None:
        for n in range(steps):
            schedule.set(lane, n, Indication.GREEN)
    return schedule


def test_reach_bounds(params):
    xlo, xhi, vlo, vhi = reach_bounds(100.0, 30.0, params.horizon_steps, params)
    assert len(xlo) == params.horizon_steps + 1
    assert xlo[0] == xhi[0] == 100.0
    assert np.all(xlo <= xhi)
    assert np.all(vhi <= params.speed_max + 1e-9)
    assert np.all(vlo >= params.speed_min - 1e-9)


def test_cav_accelerates_on_green(scene, params):
    cav = VehicleSnapshot(1, "A", VehicleKind.CAV, 100.0, 30.0)
    inputs = _inputs(scene, params, [cav], schedule=_fixed(scene, "A"))
    program = build_cav_program(1, inputs, MODE_FIXED)
    assert not program.signal_vars
    solution = program.solve(BUDGET)
    assert solution.has_solution
    traj = program.trajectory(solution, params, scene.stop_bar)
    assert traj.horizon == params.horizon_steps
    assert np.all(traj.accels >= params.accel_min - 1e-6)
    assert np.all(traj.accels <= params.accel_max + 1e-6)
    assert traj.speeds[-1] >= 30.0


def test_cav_stops_on_red(scene, params):
    cav = VehicleSnapshot(1, "A", VehicleKind.CAV, 150.0, 30.0)
    inputs = _inputs(scene, params, [cav], schedule=_fixed(scene, None))
    program = build_cav_program(1, inputs, MODE_FIXED)
    solution = program.solve(BUDGET)
    assert solution.has_solution
    traj = program.trajectory(solution, params, scene.stop_bar)
    assert traj.positions.max() <= scene.stop_bar - params.stopbar_gap + 1e-6
    assert traj.passage_step() is None


def test_follower_keeps_gap(scene, params):
    lead = VehicleSnapshot(1, "A", VehicleKind.CAV, 150.0, 10.0)
    ego = VehicleSnapshot(2, "A", VehicleKind.CAV, 110.0, 20.0)
    inputs = _inputs(scene, params, [lead, ego], schedule=_fixed(scene, "A"))
    program = build_cav_program(2, inputs, MODE_FIXED)
    solution = program.solve(BUDGET)
    traj = program.trajectory(solution, params, scene.stop_bar)
    lead_traj = inputs.trajectories[1]
    gap = lead_traj.positions[1:] - params.vehicle_length - params.same_lane_gap
    assert np.all(traj.positions[1:] + params.cav_reaction * traj.speeds[1:] <= gap + 1e-6)


def test_chv_vote_program_reproduces_car_following(scene, params):
    chv = VehicleSnapshot(1, "A", VehicleKind.CHV, 100.0, 30.0)
    red = _fixed(scene, None, steps=3)
    inputs = _inputs(scene, params, [chv], schedule=red)
    program = build_chv_vote_program(1, inputs, MODE_FIXED)
    solution = program.solve(BUDGET)
    assert solution.has_solution
    solved = program.trajectory(solution, params, scene.stop_bar)
    direct = predict_chv_trajectory(0, 100.0, 30.0, "A", red, None, params.horizon_steps, params, scene.stop_bar)
    np.testing.assert_allclose(solved.accels, direct.accels, atol=0.1)


def test_free_signals_require_boundary(scene, params):
    cav = VehicleSnapshot(1, "A", VehicleKind.CAV, 100.0, 30.0)
    inputs = _inputs(scene, params, [cav], t0=1)
    with pytest.raises(ProgramError):
        build_cav_program(1, inputs, MODE_FREE)


def test_fixed_mode_needs_schedule(scene, params):
    cav = VehicleSnapshot(1, "A", VehicleKind.CAV, 100.0, 30.0)
    with pytest.raises(ProgramError):
        build_cav_program(1, _inputs(scene, params, [cav]), MODE_FIXED)


def test_mismatched_horizon_rejected(scene, params):
    cav = VehicleSnapshot(1, "A", VehicleKind.CAV, 100.0, 30.0)
    inputs = _inputs(scene, params, [cav], schedule=_fixed(scene, "A"))
    inputs.trajectories[1] = cruise_trajectory(0, 100.0, 30.0, 3, params.traj_step, scene.stop_bar)
    with pytest.raises(ProgramError):
        build_cav_program(1, inputs, MODE_FIXED)


def test_free_mode_has_signal_variables(scene, params):
    cav = VehicleSnapshot(1, "A", VehicleKind.CAV, 100.0, 30.0)
    program = build_cav_program(1, _inputs(scene, params, [cav]), MODE_FREE)
    assert len(program.signal_vars) == 3 * len(scene.lane_ids) * params.signal_horizon
    assert program.lp.has_var("g_A_0")


def test_unanimous_votes_aggregate_to_the_vote(scene, params):
    vote = SignalPlanner(scene, params).plan(SignalSchedule.all_red(scene.lane_ids, 0, 0), params.signal_horizon,
                                             {"A": Indication.GREEN})
    vehicles = [VehicleSnapshot(1, "A", VehicleKind.CAV, 100.0, 30.0),
                VehicleSnapshot(2, "A", VehicleKind.CHV, 50.0, 30.0)]
    inputs = _inputs(scene, params, vehicles, votes={1: vote, 2: vote.copy()})
    program = build_vote_aggregation(inputs)
    solution = program.solve(BUDGET)
    assert solution.status == "optimal"
    assert program.schedule(solution).same_as(vote)


def _serve(scene, params, lane: str) -> SignalSchedule:
    return SignalPlanner(scene, params).plan(SignalSchedule.all_red(scene.lane_ids, 0, 0), params.signal_horizon,
                                             {lane: Indication.GREEN})


def _row_names(program) -> set[str]:
    return {row.name for row in program.lp.rows}


def _two_against_one(scene, params, delay: float = 0.0) -> tuple[SharedInputs, SignalSchedule, SignalSchedule]:
    green_a, green_b = _serve(scene, params, "A"), _serve(scene, params, "B")
    vehicles = [VehicleSnapshot(1, "A", VehicleKind.CHV, 100.0, 30.0),
                VehicleSnapshot(2, "A", VehicleKind.CHV, 60.0, 30.0),
                VehicleSnapshot(3, "B", VehicleKind.CHV, 100.0, 30.0, delay=delay)]
    votes = {1: green_a, 2: green_a.copy(), 3: green_b}
    return _inputs(scene, params, vehicles, votes=votes), green_a, green_b


def test_majority_lane_wins_aggregation(scene, params):
    inputs, green_a, _ = _two_against_one(scene, params)
    program = build_vote_aggregation(inputs)
    solution = program.solve(BUDGET)
    assert solution.status == "optimal"
    assert program.schedule(solution).same_as(green_a)
    # 两步 × 两条车道的投票距离，只有 B 车道的一票不一致
    assert solution.objective == pytest.approx(4.0)


def test_delay_weight_flips_aggregation(scene, params):
    inputs, _, green_b = _two_against_one(scene, params, delay=3.0)
    assert inputs.weight(3) == pytest.approx(4.0)
    program = build_vote_aggregation(inputs)
    solution = program.solve(BUDGET)
    assert solution.status == "optimal"
    assert program.schedule(solution).same_as(green_b)
    assert solution.objective == pytest.approx(8.0)


def test_first_chv_at_stop_bar_votes_green(scene, params):
    chv = VehicleSnapshot(1, "A", VehicleKind.CHV, scene.stop_bar - params.stopbar_gap, 0.0)
    program = build_chv_vote_program(1, _inputs(scene, params, [chv]), MODE_FREE)
    solution = program.solve(BUDGET)
    assert solution.has_solution
    vote = program.schedule(solution)
    assert vote.indication("A", 0) is Indication.GREEN
    assert not vote.bits[1].any()


def test_chv_vote_follows_predecessor_vote(scene, params):
    green_a = _serve(scene, params, "A")
    lead = VehicleSnapshot(1, "A", VehicleKind.CAV, 150.0, 30.0)
    ego = VehicleSnapshot(2, "A", VehicleKind.CHV, 60.0, 30.0)
    inputs = _inputs(scene, params, [lead, ego], votes={1: green_a})
    program = build_chv_vote_program(2, inputs, MODE_FREE)
    steps = range(params.signal_horizon)
    assert {f"prio_g_2_{n}" for n in steps} <= _row_names(program)
    solution = program.solve(BUDGET)
    assert solution.has_solution
    vote = program.schedule(solution)
    assert all(vote.indication("A", n) is Indication.GREEN for n in steps)


def _white_history(scene, steps: int = 2) -> SignalSchedule:
    history = SignalSchedule.all_red(scene.lane_ids, 0, steps)
    for n in range(steps):
        history.set("A", n, Indication.WHITE)
    return history


def test_ungrouped_chv_at_bar_ends_white(scene, params):
    r = params.steps_per_signal
    chv = VehicleSnapshot(1, "A", VehicleKind.CHV, 150.0, 30.0)
    inputs = _inputs(scene, params, [chv], t0=2 * r)
    inputs.history = _white_history(scene)
    program = build_chv_vote_program(1, inputs, MODE_FREE)
    assert "white_end_A_2" in _row_names(program)
    program.lp.fix("w_A_2", 1.0)
    assert program.solve(BUDGET).status == "infeasible"


def test_grouped_chv_keeps_white(scene, params):
    r = params.steps_per_signal
    leader = VehicleSnapshot(5, "A", VehicleKind.CAV, scene.stop_bar + 20.0, 30.0)
    chv = VehicleSnapshot(1, "A", VehicleKind.CHV, 150.0, 30.0)
    inputs = _inputs(scene, params, [leader, chv], t0=2 * r)
    inputs.history = _white_history(scene)
    inputs.groups = [VehicleGroup("A", 5, (5, 1))]
    program = build_chv_vote_program(1, inputs, MODE_FREE)
    assert not any(name.startswith("white_end_A") for name in _row_names(program))


def test_cuts_keep_the_optimum(scene, params):
    lead = VehicleSnapshot(1, "A", VehicleKind.CAV, 185.0, 30.0)
    ego = VehicleSnapshot(2, "A", VehicleKind.CAV, 140.0, 30.0)
    inputs = _inputs(scene, params, [lead, ego])
    uncut = build_cav_program(2, inputs, MODE_FREE, cuts=False)
    cut = build_cav_program(2, inputs, MODE_FREE, cuts=True)
    assert cut.lp.n_rows > uncut.lp.n_rows
    plain, tightened = uncut.solve(BUDGET), cut.solve(BUDGET)
    assert plain.status == tightened.status == "optimal"
    assert tightened.objective == pytest.approx(plain.objective, rel=1e-6, abs=1e-6)


def test_passed_vehicle_has_no_passage_binaries(scene, params):
    cav = VehicleSnapshot(1, "A", VehicleKind.CAV, scene.stop_bar + 5.0, 30.0)
    program = build_cav_program(1, _inputs(scene, params, [cav], schedule=_fixed(scene, "A")), MODE_FIXED)
    assert not any(name.startswith("gamma_") for name in program.lp.names)


def test_zero_white_incentive_is_inert(scene, params):
    plain = params.with_overrides(white_incentive_weight=0.0)
    cav = VehicleSnapshot(1, "A", VehicleKind.CAV, 100.0, 30.0)
    program = build_cav_program(1, _inputs(scene, plain, [cav]), MODE_FREE)
    white = {i for (_, kind, _), i in program.signal_vars.items() if kind == "w"}
    assert not white & set(program.lp.objective)

    no_white = build_cav_program(1, _inputs(scene, plain, [cav]), MODE_FREE)
    for i in white:
        no_white.lp.fix(program.lp.names[i], 0.0)
    free, closed = program.solve(BUDGET), no_white.solve(BUDGET)
    assert free.status == closed.status == "optimal"
    assert free.objective == pytest.approx(closed.objective, rel=1e-6, abs=1e-6)
