#!/usr/bin/env python3
"""
滚动时域控制与仿真

Plant 负责车辆生成、按加速度推进与驶离；Simulation 在每个轨迹步调用控制器：
- white / no_white：信号步边界做信号与轨迹联合协商，其余轨迹步只协商轨迹，只执行第一步
- actuated / fixed_time：基准信号控制，所有车辆（含 CAV）按跟驰模型行驶
"""
from __future__ import annotations

import dataclasses
import time
from collections import deque

import numpy as np

from core.actuated import ActuatedController, DetectorState, FixedTimeController
from core.agreement import (
    JOINT,
    TRAJECTORIES_ONLY,
    Agreement,
    AgreementResult,
    WorldSnapshot,
    iteration_rows,
    run_agreement,
)
from core.chv_model import FOLLOWING, ChvContext, chv_accel_detail, following_term, signal_term
from core.config_manager import Scenario, override_scenario
from core.errors import ProgramError, SolverError
from core.logger import get_logger
from core.metrics import STOP_DURATION, STOP_SPEED
from core.scene import Arrival, IntersectionScene, generate_arrivals
from core.signal_planner import SignalPlanner
from core.sim_log import ControlStepRecord, SimulationLog
from core.traffic import SignalSchedule, Trajectory, Vehicle, form_groups
from core.vehicle_programs import VehicleProgram, VehicleSnapshot
from core.version import VERSION
from models.experiment_schema import CONTROLLER_KINDS, RuntimeSettings
from models.scenario_schema import Parameters

logger = get_logger(__name__)

# 这些绑定项下才叠加驾驶噪声（跟驰或自由流）
NOISY_TERMS = (FOLLOWING, "accel_max", "speed_max")


class Plant:
    """仿真对象：车辆进入、运动与驶离"""

    def __init__(self, scene: IntersectionScene, params: Parameters, arrivals: list[Arrival], seed: int):
        self.scene = scene
        self.p = params
        self.pending: deque[Arrival] = deque(arrivals)
        self.buffers: dict[str, deque[Arrival]] = {lane: deque() for lane in scene.lane_ids}
        self.lanes: dict[str, list[Vehicle]] = {lane: [] for lane in scene.lane_ids}
        self.finished: list[Vehicle] = []
        self.rng = np.random.default_rng([seed, 2])

    # ---- 查询 ----

    def vehicles(self) -> list[Vehicle]:
        """网络内的车辆，按车道、从前到后"""
        return [v for lane in self.scene.lane_ids for v in self.lanes[lane]]

    def order(self) -> dict[str, list[int]]:
        return {lane: [v.id for v in self.lanes[lane]] for lane in self.scene.lane_ids}

    def leader_of(self, vehicle: Vehicle) -> Vehicle | None:
        queue = self.lanes[vehicle.lane]
        i = queue.index(vehicle)
        return queue[i - 1] if i > 0 else None

    def current_delay(self, vehicle: Vehicle, now: float) -> float:
        return max(0.0, now - vehicle.arrival_time - vehicle.x / self.p.speed_max)

    def detectors(self, detector_length: float) -> dict[str, DetectorState]:
        b = self.scene.stop_bar
        out = {}
        for lane in self.scene.lane_ids:
            waiting = [v for v in self.lanes[lane] if v.x <= b]
            out[lane] = DetectorState(
                presence=any(b - v.x <= detector_length for v in waiting),
                call=bool(waiting) or bool(self.buffers[lane]),
            )
        return out

    # ---- 进入与推进 ----

    def _entry_clear(self, lane: str) -> bool:
        """以 v̄ 进入时与最后一辆车保持可制动的间距"""
        queue = self.lanes[lane]
        if not queue:
            return True
        p = self.p
        last = queue[-1]
        gap = last.x - p.vehicle_length
        need = (p.same_lane_gap + p.chv_reaction * p.speed_max
                + max(0.0, p.speed_max ** 2 - last.v ** 2) / (2.0 * -p.accel_min))
        return gap >= need

    def admit(self, now: float) -> list[Vehicle]:
        """到达车辆进入缓冲队列，车道入口空闲时以 v̄ 进入"""
        while self.pending and self.pending[0].time <= now + 1e-9:
            arrival = self.pending.popleft()
            self.buffers[arrival.lane].append(arrival)
        entered = []
        for lane in self.scene.lane_ids:
            buffer = self.buffers[lane]
            if buffer and self._entry_clear(lane):
                arrival = buffer.popleft()
                vehicle = Vehicle(arrival.vehicle_id, lane, arrival.kind, arrival.time, x=0.0, v=self.p.speed_max,
                                  entry_time=now)
                self.lanes[lane].append(vehicle)
                entered.append(vehicle)
        return entered

    def bounded(self, vehicle: Vehicle, accel: float) -> float:
        """按加速度与速度上下限截断"""
        p = self.p
        dt = p.traj_step
        lo = max(p.accel_min, (p.speed_min - vehicle.v) / dt)
        hi = min(p.accel_max, (p.speed_max - vehicle.v) / dt)
        return float(min(max(accel, lo), hi))

    def noisy(self, accel: float, ctx: ChvContext, binding: str) -> float:
        """人工驾驶噪声：只在行驶中且由跟驰或自由流项决定时叠加，不超过跟驰项与信号项"""
        if self.p.chv_plant_noise <= 0 or ctx.v < STOP_SPEED or binding not in NOISY_TERMS:
            return accel
        caps = [self.p.accel_max]
        if ctx.has_leader:
            caps.append(following_term(ctx, self.p))
        if not ctx.passed:
            caps.append(signal_term(ctx, self.p))
        return min(accel + float(self.rng.normal(0.0, self.p.chv_plant_noise)), min(caps))

    def advance(self, accels: dict[int, float], now: float) -> list[Vehicle]:
        """推进一个轨迹步，返回驶离的车辆"""
        p = self.p
        dt = p.traj_step
        exited = []
        for lane in self.scene.lane_ids:
            destination = self.scene.lane(lane).destination
            keep = []
            for vehicle in self.lanes[lane]:
                a = self.bounded(vehicle, accels.get(vehicle.id, 0.0))
                x_prev = vehicle.x
                vehicle.accel = a
                vehicle.x = x_prev + vehicle.v * dt + 0.5 * a * dt * dt
                vehicle.v = min(max(vehicle.v + a * dt, p.speed_min), p.speed_max)
                if vehicle.v < STOP_SPEED:
                    before = vehicle.stopped_for
                    vehicle.stopped_for += dt
                    if before < STOP_DURATION <= vehicle.stopped_for + 1e-9:
                        vehicle.stops += 1
                else:
                    vehicle.stopped_for = 0.0
                if vehicle.x >= destination:
                    frac = (destination - x_prev) / max(vehicle.x - x_prev, 1e-9)
                    vehicle.exit_time = now + frac * dt
                    vehicle.delay = max(0.0, vehicle.exit_time - vehicle.arrival_time - destination / p.speed_max)
                    exited.append(vehicle)
                else:
                    keep.append(vehicle)
            self.lanes[lane] = keep
        self.finished.extend(exited)
        return exited

    def close(self, now: float) -> list[Vehicle]:
        """研究时段结束：未驶离与未进入的车辆按截至此刻的延误计入"""
        out = list(self.finished)
        for vehicle in self.vehicles():
            vehicle.delay = self.current_delay(vehicle, now)
            out.append(vehicle)
        waiting = [a for lane in self.scene.lane_ids for a in self.buffers[lane]] + list(self.pending)
        for arrival in waiting:
            if arrival.time > now:
                continue
            out.append(Vehicle(arrival.vehicle_id, arrival.lane, arrival.kind, arrival.time,
                               delay=max(0.0, now - arrival.time)))
        return sorted(out, key=lambda v: v.id)


class Simulation:
    """一次研究时段的闭环仿真"""

    def __init__(self, scenario: Scenario, controller: str = "white", settings: RuntimeSettings | None = None):
        if controller not in CONTROLLER_KINDS:
            raise ValueError(f"未知控制器: {controller}，可选 {list(CONTROLLER_KINDS)}")
        self.scenario = scenario
        self.scene = scenario.scene
        self.p = scenario.params
        self.kind = controller
        self.settings = settings or RuntimeSettings()
        self.white_enabled = controller == "white"
        self.planner = SignalPlanner(self.scene, self.p)
        self.plant = Plant(self.scene, self.p, generate_arrivals(self.scene, scenario.demand, self.p),
                           scenario.demand.seed)
        self.history = SignalSchedule.all_red(self.scene.lane_ids, 0, 0)
        self.plan: SignalSchedule | None = None
        self.cav_plans: dict[int, Trajectory] = {}
        self.baseline = None
        if controller == "actuated":
            self.baseline = ActuatedController(self.scene, self.p, scenario.baseline, self.planner)
        elif controller == "fixed_time":
            self.baseline = FixedTimeController(self.scene, self.p, scenario.baseline, self.planner)
        self.log = SimulationLog(metadata=self._metadata(), history=self.history)

    def _metadata(self) -> dict:
        demand = self.scenario.demand
        return {
            "scenario": self.scenario.name,
            "controller": self.kind,
            "penetration": float(demand.penetration),
            "demand_level": demand.demand_level,
            "through_rate": float(demand.resolved_through_rate),
            "seed": int(demand.seed),
            "config_hash": self.scenario.config_hash,
            "traj_step": float(self.p.traj_step),
            "signal_step": float(self.p.signal_step),
            "study_period": float(self.p.study_period),
            "version": VERSION,
        }

    # ---- 信号 ----

    def _apply_signal(self, schedule: SignalSchedule, n: int) -> dict[str, str]:
        step = schedule.window(n, n + 1)
        if not self.planner.is_legal(self.history, step):
            logger.error(f"信号步 {n}: 待执行灯色不合法，改为合法延续")
            step = self.planner.extend(self.history, None, 1, white_keep_ok=())
        self.history = self.history.concat(step)
        return {lane: step.indication(lane, n).value for lane in self.scene.lane_ids}

    # ---- 协商 ----

    def _snapshot(self, t: int, reference: SignalSchedule | None = None) -> WorldSnapshot:
        now = t * self.p.traj_step
        vehicles = {v.id: VehicleSnapshot(v.id, v.lane, v.kind, v.x, v.v, self.plant.current_delay(v, now))
                    for v in self.plant.vehicles()}
        order = self.plant.order()
        groups = []
        for lane in self.scene.lane_ids:
            groups.extend(form_groups([vehicles[vid] for vid in order[lane]], self.p.max_group_length,
                                      self.p.vehicle_length))
        plans = {vid: plan for vid, plan in self.cav_plans.items() if vid in vehicles and plan.t0 == t}
        return WorldSnapshot(self.scene, self.p, t, self.history, vehicles, order, groups,
                             reference if reference is not None else self.history, plans, self.white_enabled)

    def _joint_snapshot(self, t: int) -> WorldSnapshot:
        """参考方案为上一方案的合法延续"""
        snap = self._snapshot(t)
        keep_ok = snap.white_keep_ok() if self.white_enabled else ()
        reference = self.planner.extend(self.history, self.plan, self.p.signal_horizon, white_keep_ok=keep_ok)
        return dataclasses.replace(snap, reference=reference)

    def _joint_step(self, t: int) -> tuple[AgreementResult | None, dict[str, str], bool]:
        """信号步边界：联合协商并执行第一步灯色"""
        n = t // self.p.steps_per_signal
        snap = self._joint_snapshot(t)
        reference = snap.reference
        result = None
        fallback = False
        schedule = reference
        if snap.vehicles:
            result = run_agreement(snap, JOINT, self.settings, self.planner)
            if result.converged:
                schedule = result.schedule
            else:
                fallback = True
                fixed = bool(result.records) and result.records[-1].schedule_fixed
                schedule = result.schedule if fixed else reference
                logger.warning(f"步 {t}: 协商未收敛，信号采用{'聚合方案' if fixed else '上一方案的延续'}，"
                               f"CAV 按跟驰模型限幅")
        self.plan = schedule
        return result, self._apply_signal(schedule, n), fallback

    def _trajectory_step(self, t: int) -> tuple[AgreementResult | None, bool]:
        """信号步内部：给定信号只协商轨迹"""
        snap = self._snapshot(t, reference=self.plan)
        if not any(v.is_cav for v in snap.vehicles.values()):
            return None, False
        result = run_agreement(snap, TRAJECTORIES_ONLY, self.settings, self.planner)
        if not result.converged:
            logger.warning(f"步 {t}: 轨迹协商未收敛，CAV 按跟驰模型限幅")
        return result, not result.converged

    # ---- 加速度 ----

    def _context(self, vehicle: Vehicle, reaction: float | None = None) -> ChvContext:
        leader = self.plant.leader_of(vehicle)
        n = self.history.end - 1
        return ChvContext(
            x=vehicle.x, v=vehicle.v, stop_bar=self.scene.stop_bar,
            leader_x=None if leader is None else leader.x,
            leader_v=None if leader is None else leader.v,
            active=n >= 0 and self.history.is_active(vehicle.lane, n),
            passed=vehicle.x > self.scene.stop_bar,
            reaction=reaction,
        )

    def _accelerations(self, result: AgreementResult | None, capped: bool) -> dict[int, float]:
        accels = {}
        for vehicle in self.plant.vehicles():
            if vehicle.is_cav and self.baseline is None:
                follow, _ = chv_accel_detail(self._context(vehicle, self.p.cav_reaction), self.p)
                planned = None if result is None else result.accels.get(vehicle.id)
                if planned is None:
                    accels[vehicle.id] = follow
                elif capped or vehicle.id in result.held:
                    accels[vehicle.id] = min(planned, follow)
                else:
                    accels[vehicle.id] = planned
                continue
            ctx = self._context(vehicle, self.p.cav_reaction if vehicle.is_cav else None)
            base, binding = chv_accel_detail(ctx, self.p)
            accels[vehicle.id] = base if vehicle.is_cav else self.plant.noisy(base, ctx, binding)
        return accels

    def _carry_plans(self, result: AgreementResult | None, t: int):
        """把本步方案平移到下一步，以实际状态为起点"""
        if result is None:
            self.cav_plans = {}
            return
        dt, b = self.p.traj_step, self.scene.stop_bar
        present = {v.id: v for v in self.plant.vehicles()}
        carried = {}
        for vid, plan in result.plans.items():
            vehicle = present.get(vid)
            if vehicle is None or not vehicle.is_cav:
                continue
            accels = np.concatenate([plan.accels[1:], [0.0]])
            carried[vid] = Trajectory.from_accels(t + 1, vehicle.x, vehicle.v, accels, dt, b)
        self.cav_plans = carried

    # ---- 主循环 ----

    def step(self, t: int):
        """执行一个轨迹步：控制决策、记录、推进车辆"""
        r = self.p.steps_per_signal
        now = t * self.p.traj_step
        log = self.log
        self.plant.admit(now)
        started = time.perf_counter()
        result, fallback, indications = None, False, {}
        mode = JOINT if t % r == 0 else TRAJECTORIES_ONLY
        try:
            if self.baseline is not None:
                mode = self.kind
                if t % r == 0:
                    schedule = self.baseline.step(self.history, self.plant.detectors(
                        self.scenario.baseline.detector_length))
                    indications = self._apply_signal(schedule, t // r)
            elif t % r == 0:
                result, indications, fallback = self._joint_step(t)
            else:
                result, fallback = self._trajectory_step(t)
        except SolverError:
            logger.exception(f"步 {t}: 求解器失败，仿真中止")
            raise
        accels = self._accelerations(result, fallback)
        wall = time.perf_counter() - started

        cavs = set()
        for vehicle in self.plant.vehicles():
            if vehicle.is_cav:
                cavs.add(vehicle.id)
            a = self.plant.bounded(vehicle, accels[vehicle.id])
            accels[vehicle.id] = a
            log.trajectory_rows.append((t, round(now, 6), vehicle.id, vehicle.lane, vehicle.kind.value,
                                        vehicle.x, vehicle.v, a))
        if result is not None:
            log.iteration_rows.extend(iteration_rows(result.records))
        log.steps.append(ControlStepRecord(
            step=t, mode=mode, wall_time=wall,
            accels={vid: a for vid, a in accels.items() if vid in cavs},
            indications=indications,
            iterations=0 if result is None else result.iterations,
            converged=True if result is None else result.converged,
            fallback=fallback,
        ))
        self.plant.advance(accels, now)
        if self.baseline is None:
            self._carry_plans(result, t)

    def run(self) -> SimulationLog:
        logger.info(f"开始仿真: 场景 {self.scenario.name}, 控制器 {self.kind}, "
                    f"渗透率 {self.scenario.demand.penetration:.0%}, 种子 {self.scenario.demand.seed}")
        for t in range(self.p.study_steps):
            self.step(t)
        log = self.log
        log.history = self.history
        log.vehicles = self.plant.close(self.p.study_period)
        white = int(self.history.bits[1].sum())
        logger.info(f"仿真结束: {len(log.vehicles)} 辆车，总延误 {log.total_delay:.1f} s，白灯车道步 {white}")
        return log

    def program_at(self, t: int, vehicle_id: int) -> VehicleProgram:
        """仿真到第 t 步，返回该步协商第一轮中车辆 vehicle_id 求解的模型

        Raises:
            ProgramError: 基准控制器、步号越界或车辆不在路网中
        """
        if self.baseline is not None:
            raise ProgramError(f"控制器 {self.kind} 不建立车辆模型")
        if not 0 <= t < self.p.study_steps:
            raise ProgramError(f"步号 {t} 超出研究时段 [0, {self.p.study_steps})")
        for k in range(t):
            self.step(k)
        self.plant.admit(t * self.p.traj_step)
        if t % self.p.steps_per_signal == 0:
            agreement = Agreement(self._joint_snapshot(t), JOINT, self.settings, self.planner)
        else:
            agreement = Agreement(self._snapshot(t, reference=self.plan), TRAJECTORIES_ONLY, self.settings,
                                  self.planner)
        return agreement.first_program(vehicle_id)


def run_study(scenario: Scenario, controller: str = "white", seed: int | None = None,
              penetration: float | None = None, settings: RuntimeSettings | None = None) -> SimulationLog:
    """运行一个研究时段

    Args:
        scenario: 校验后的场景（几何、参数、需求）
        controller: white / no_white / actuated / fixed_time
        seed: 覆盖需求中的随机种子
        penetration: 覆盖 CAV 渗透率
        settings: 运行时设置

    Returns:
        SimulationLog
    """
    if seed is not None or penetration is not None:
        scenario = override_scenario(scenario, seed=seed, penetration=penetration)
    return Simulation(scenario, controller, settings).run()
