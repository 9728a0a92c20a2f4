#!/usr/bin/env python3
"""
验收测试组

- solver_oracle：随机 0-1 规划上分支定界与穷举结果一致
- safety：所提控制下无同车道重叠、无冲突邻域同时占用、无低于阈值的 TTC
- signal_legality：各控制器执行的信号历史全部满足相位规则
- convergence：两个冲突车队的协商在限定轮次内收敛
- chv_fidelity：投票模型中的线性化跟驰关系与直接计算一致
"""
from __future__ import annotations

import itertools
import time
from collections.abc import Callable
from dataclasses import asdict, dataclass, field

import numpy as np

from core.agreement import JOINT, WorldSnapshot, run_agreement
from core.chv_model import predict_chv_trajectory
from core.config_manager import Scenario, override_scenario
from core.controller import run_study
from core.logger import get_logger
from core.metrics import compute_ttc, safety_violations
from core.opt_engine import GE, LE, Budget, LinearProgram, LinExpr, solve_mip
from core.scene import IntersectionScene, LaneSpec
from core.signal_planner import SignalPlanner
from core.signal_rules import validate_schedule
from core.traffic import SignalSchedule, Trajectory, VehicleKind, cruise_trajectory, form_groups
from core.vehicle_programs import MODE_FIXED, SharedInputs, VehicleSnapshot, build_chv_vote_program
from models.experiment_schema import CONTROLLER_KINDS, RuntimeSettings
from models.scenario_schema import Parameters

logger = get_logger(__name__)

BATTERIES = ("solver_oracle", "safety", "convergence", "signal_legality", "chv_fidelity")

SAFETY_PENETRATIONS = (0.0, 0.3, 0.5, 0.8, 1.0)
STEP_BUDGET = 0.5  # s，超出时提示
STEP_LIMIT = 2.0  # s，超出时判为失败


@dataclass
class BatteryReport:
    """一组验收测试的结果"""
    name: str
    cases: int = 0
    failures: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    details: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def passed(self) -> bool:
        return not self.failures

    def as_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


# ---- solver_oracle ----

def random_milp(seed: int, max_binaries: int = 14, max_rows: int = 30) -> LinearProgram:
    """随机整系数 0-1 规划；多数实例以一个随机点保证可行，每 10 个中有 1 个不做保证"""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(4, max_binaries + 1))
    m = int(rng.integers(3, max_rows + 1))
    lp = LinearProgram(f"oracle_{seed}")
    idx = [lp.add_binary(f"z{i}") for i in range(n)]
    anchor = rng.integers(0, 2, size=n)
    guaranteed = seed % 10 != 0
    for j in range(m):
        coefs = rng.integers(-9, 10, size=n)
        sense = LE if rng.random() < 0.7 else GE
        base = int(coefs @ anchor) if guaranteed else int(rng.integers(-10, 10))
        rhs = base + int(rng.integers(0, 6)) * (1 if sense == LE else -1)
        lp.add_row({i: float(c) for i, c in zip(idx, coefs)}, sense, float(rhs), f"c{j}")
    objective = LinExpr({i: float(c) for i, c in zip(idx, rng.integers(-20, 21, size=n))})
    lp.set_objective(objective)
    return lp


def enumerate_optimum(lp: LinearProgram) -> float | None:
    """穷举全部 0-1 取值求最优目标值，无可行解时返回 None"""
    arr = lp.arrays()
    if not arr.binary.all():
        raise ValueError("穷举只支持纯 0-1 规划")
    points = np.array(list(itertools.product((0.0, 1.0), repeat=lp.n_vars)))
    points = points[np.all((points >= arr.lb) & (points <= arr.ub), axis=1)]
    if lp.n_rows:
        lhs = points @ arr.a.T
        ok = np.ones(len(points), dtype=bool)
        for r, sense in enumerate(arr.senses):
            if sense == LE:
                ok &= lhs[:, r] <= arr.b[r] + 1e-9
            elif sense == GE:
                ok &= lhs[:, r] >= arr.b[r] - 1e-9
            else:
                ok &= np.abs(lhs[:, r] - arr.b[r]) <= 1e-9
        points = points[ok]
    if not len(points):
        return None
    return float((points @ arr.c).min() + arr.const)


def solver_oracle(seeds: range = range(1, 101)) -> BatteryReport:
    report = BatteryReport("solver_oracle")
    budget = Budget(nodes=1_000_000, seconds=60.0)
    for seed in seeds:
        lp = random_milp(seed)
        expected = enumerate_optimum(lp)
        solution = solve_mip(lp, budget)
        report.cases += 1
        if expected is None:
            if solution.has_solution:
                report.failures.append(f"seed {seed}: 穷举无可行解，求解器返回 {solution.objective:g}")
            continue
        if solution.status != "optimal" or abs(solution.objective - expected) > 1e-6:
            report.failures.append(f"seed {seed}: 求解器 {solution.status} {solution.objective:g}，穷举 {expected:g}")
    return report


# ---- 仿真类测试组 ----

def _runs(scenario: Scenario, controllers: tuple[str, ...], penetrations: tuple[float, ...],
          seeds: tuple[int, ...], study_period: float | None, settings: RuntimeSettings | None):
    if study_period is not None:
        scenario = override_scenario(scenario, study_period=study_period)
    for controller in controllers:
        for penetration in penetrations:
            for seed in seeds:
                log = run_study(scenario, controller, seed=seed, penetration=penetration, settings=settings)
                yield f"{controller}/p={penetration:g}/seed={seed}", scenario, log


def safety(scenario: Scenario, penetrations: tuple[float, ...] = SAFETY_PENETRATIONS,
           seeds: tuple[int, ...] = (1, 2, 3, 4), study_period: float | None = 300.0,
           settings: RuntimeSettings | None = None) -> BatteryReport:
    report = BatteryReport("safety")
    walls = []
    for label, sc, log in _runs(scenario, ("white",), penetrations, seeds, study_period, settings):
        report.cases += 1
        violations = safety_violations(log, sc.scene, sc.params)
        for kind, count in violations["kind"].value_counts().items():
            report.failures.append(f"{label}: {kind} {count} 次")
        rear, crossing = compute_ttc(log, sc.scene, sc.params).near_collisions(sc.params.ttc_threshold)
        if rear or crossing:
            report.failures.append(f"{label}: TTC < {sc.params.ttc_threshold}s 跟车 {rear} 次，交叉 {crossing} 次")
        walls.extend(s.wall_time for s in log.steps)
    if walls:
        median = float(np.median(walls))
        report.details["median_step_time"] = round(median, 4)
        if median > STEP_LIMIT:
            report.failures.append(f"控制步耗时中位数 {median:.3f}s 超过 {STEP_LIMIT}s")
        elif median > STEP_BUDGET:
            report.warnings.append(f"控制步耗时中位数 {median:.3f}s 超过 {STEP_BUDGET}s")
    return report


def signal_legality(scenario: Scenario, controllers: tuple[str, ...] = CONTROLLER_KINDS,
                    penetrations: tuple[float, ...] = SAFETY_PENETRATIONS, seeds: tuple[int, ...] = (1,),
                    study_period: float | None = 300.0, settings: RuntimeSettings | None = None) -> BatteryReport:
    report = BatteryReport("signal_legality")
    for label, sc, log in _runs(scenario, controllers, penetrations, seeds, study_period, settings):
        report.cases += 1
        violations = validate_schedule(log.history, sc.scene, sc.params)
        if violations:
            first = violations[0]
            report.failures.append(f"{label}: {len(violations)} 处违规，首个 {first.rule} "
                                   f"(车道 {first.lane}, 步 {first.step})")
    return report


# ---- convergence ----

def two_group_snapshot(scenario: Scenario, offset: float = 100.0, speed: float = 35.0) -> WorldSnapshot:
    """两条冲突车道各一个 CAV 领航、两辆 CHV 跟随的车队，位于停车线前约 offset 处"""
    scene, p = scenario.scene, scenario.params
    lanes = scene.lane_ids[:2]
    spacing = p.vehicle_length + p.same_lane_gap + p.chv_reaction * speed
    vehicles: dict[int, VehicleSnapshot] = {}
    order: dict[str, list[int]] = {lane: [] for lane in scene.lane_ids}
    vid = 1
    for k, lane in enumerate(lanes):
        head = scene.stop_bar - offset - 10.0 * k
        for j in range(3):
            kind = VehicleKind.CAV if j == 0 else VehicleKind.CHV
            vehicles[vid] = VehicleSnapshot(vid, lane, kind, head - j * spacing, speed, delay=0.0)
            order[lane].append(vid)
            vid += 1
    groups = []
    for lane in scene.lane_ids:
        groups.extend(form_groups([vehicles[i] for i in order[lane]], p.max_group_length, p.vehicle_length))
    history = SignalSchedule.all_red(scene.lane_ids, 0, 0)
    reference = SignalPlanner(scene, p).plan(history, p.signal_horizon)
    return WorldSnapshot(scene, p, 0, history, vehicles, order, groups, reference)


def convergence(scenario: Scenario, max_iterations: int = 15, settings: RuntimeSettings | None = None) -> BatteryReport:
    report = BatteryReport("convergence", cases=1)
    result = run_agreement(two_group_snapshot(scenario), JOINT, settings)
    deltas = [r.max_delta for r in result.records]
    report.details = {"iterations": result.iterations, "converged": result.converged,
                      "deltas": [round(d, 6) for d in deltas]}
    if not result.converged:
        report.failures.append(f"协商未收敛（{result.iterations} 轮）")
    elif result.iterations > max_iterations:
        report.failures.append(f"收敛用了 {result.iterations} 轮，超过 {max_iterations}")
    for i in range(3, len(deltas)):
        if deltas[i] > deltas[i - 1] + 1e-6:
            report.failures.append(f"第 {i + 1} 轮轨迹变化量上升: {deltas[i - 1]:.4f} -> {deltas[i]:.4f}")
            break
    return report


# ---- chv_fidelity ----

def _fidelity_case(rng: np.random.Generator, p: Parameters) -> tuple[SharedInputs, Trajectory | None]:
    b = 200.0
    scene = IntersectionScene(lanes=(LaneSpec("A", "EB", "through", 400.0),), stop_bar=b,
                              conflict_sets={"A": frozenset()}, conflict_points={}, detection_range=b)
    H, r = p.horizon_steps, p.steps_per_signal
    dt = p.traj_step
    x0 = float(rng.uniform(b - 150.0, b + 20.0))
    v0 = float(rng.uniform(p.speed_min, p.speed_max))
    vehicles = {2: VehicleSnapshot(2, "A", VehicleKind.CHV, x0, v0)}
    order = {"A": [2]}
    trajectories = {2: cruise_trajectory(0, x0, v0, H, dt, b)}
    leader = None
    if rng.random() < 0.7:
        lx = x0 + p.vehicle_length + float(rng.uniform(p.same_lane_gap, p.same_lane_gap + 80.0))
        lv = float(rng.uniform(p.speed_min, p.speed_max))
        accels = rng.uniform(p.accel_min, p.accel_max, size=H)
        speeds = lv + np.cumsum(accels) * dt
        accels = np.where((speeds < p.speed_min) | (speeds > p.speed_max), 0.0, accels)
        leader = Trajectory.from_accels(0, lx, lv, accels, dt, b)
        vehicles[1] = VehicleSnapshot(1, "A", VehicleKind.CHV, lx, lv)
        order["A"] = [1, 2]
        trajectories[1] = leader
    steps = (H - 1) // r + 2
    schedule = SignalSchedule.all_red(("A",), 0, steps)
    schedule.bits[0, 0, :] = rng.random(steps) < 0.5
    inputs = SharedInputs(scene=scene, params=p, t0=0, n0=0, history=SignalSchedule.all_red(("A",), 0, 0),
                          vehicles=vehicles, order=order, trajectories=trajectories, schedule=schedule)
    return inputs, leader


def chv_fidelity(contexts: int = 1000, seed: int = 0, params: Parameters | None = None,
                 tolerance: float = 0.1) -> BatteryReport:
    """线性化跟驰关系与直接滚动计算的逐步加速度差不超过 tolerance"""
    report = BatteryReport("chv_fidelity")
    p = params or Parameters(planning_horizon=2.0, study_period=2.0, max_green=2.0, min_active_through=2.0,
                             min_active_left=2.0, min_white_through=2.0, min_white_left=2.0, yellow=2.0,
                             all_red=2.0, max_group_length=360.0)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for k in range(contexts):
        inputs, leader = _fidelity_case(rng, p)
        ego = inputs.vehicles[2]
        program = build_chv_vote_program(2, inputs, MODE_FIXED)
        solution = program.solve(Budget(nodes=5000, seconds=10.0))
        report.cases += 1
        if not solution.has_solution:
            report.failures.append(f"context {k}: 模型无解 ({solution.status})")
            continue
        solved = program.trajectory(solution, p, inputs.stop_bar)
        direct = predict_chv_trajectory(0, ego.x, ego.v, "A", inputs.schedule, leader, p.horizon_steps, p,
                                        inputs.stop_bar)
        diff = float(np.max(np.abs(solved.accels - direct.accels)))
        worst = max(worst, diff)
        if diff > tolerance:
            report.failures.append(f"context {k}: 最大加速度差 {diff:.4f} ft/s²")
    report.details["max_abs_diff"] = round(worst, 6)
    return report


def run_battery(name: str, scenario: Scenario | None = None, settings: RuntimeSettings | None = None,
                **options) -> BatteryReport:
    """按名称运行一组验收测试

    Args:
        name: 测试组名称
        scenario: 仿真类与收敛测试使用的场景
        settings: 运行时设置
        **options: 传给具体测试组的参数（种子、渗透率、研究时段等）

    Returns:
        BatteryReport
    """
    batteries: dict[str, Callable[..., BatteryReport]] = {
        "solver_oracle": lambda: solver_oracle(**options),
        "safety": lambda: safety(scenario, settings=settings, **options),
        "signal_legality": lambda: signal_legality(scenario, settings=settings, **options),
        "convergence": lambda: convergence(scenario, settings=settings, **options),
        "chv_fidelity": lambda: chv_fidelity(**options),
    }
    if name not in batteries:
        raise ValueError(f"未知测试组: {name}，可选 {list(BATTERIES)}")
    if name in ("safety", "signal_legality", "convergence") and scenario is None:
        raise ValueError(f"测试组 {name} 需要场景")
    started = time.perf_counter()
    logger.info(f"开始验收测试组 {name}")
    report = batteries[name]()
    report.wall_time = round(time.perf_counter() - started, 3)
    logger.info(f"测试组 {name}: {report.cases} 例，失败 {len(report.failures)}")
    return report
