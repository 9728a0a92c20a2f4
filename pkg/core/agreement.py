#!/usr/bin/env python3
"""
分布式协商

每一轮中各车辆独立求解自己的模型（CAV 轨迹 + 投票，CHV 投票），轨迹平均后共享；
投票连续两轮不变（或到达截止轮次）时求解投票聚合并固定信号方案，之后只在给定
信号下继续协商轨迹，直到轨迹逐步变化量不超过 ε。
"""
from __future__ import annotations

import time
from collections.abc import Iterable
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from core.chv_model import predict_chv_trajectory
from core.errors import AggregationError, ProgramError
from core.logger import get_logger
from core.opt_engine import Budget, MipSolution
from core.scene import IntersectionScene
from core.signal_planner import SignalPlanner
from core.traffic import SignalSchedule, Trajectory, VehicleGroup, cruise_trajectory
from core.vehicle_programs import (
    MODE_FIXED,
    MODE_FREE,
    SharedInputs,
    VehicleProgram,
    VehicleSnapshot,
    build_cav_program,
    build_chv_vote_program,
    build_vote_aggregation,
)
from models.experiment_schema import RuntimeSettings
from models.scenario_schema import Parameters

logger = get_logger(__name__)

JOINT = "joint"
TRAJECTORIES_ONLY = "trajectories_only"
SLACK_TOL = 1e-6


def average_cav_trajectory(previous: Trajectory, solved: Trajectory, iteration: int, dt: float,
                           stop_bar: float) -> Trajectory:
    """按 (1 - 1/𝒯)·x̂ + (1/𝒯)·x 平均位置，速度与 γ 由平均后的位置重新推出

    Raises:
        ProgramError: 两条轨迹时域或起点不一致
    """
    if iteration < 1:
        raise ProgramError(f"迭代序号必须 >= 1: {iteration}")
    if previous.horizon != solved.horizon or previous.t0 != solved.t0:
        raise ProgramError("平均的两条轨迹时域不一致")
    if iteration == 1:
        return solved
    w = 1.0 / iteration
    positions = (1.0 - w) * previous.positions + w * solved.positions
    return Trajectory.from_positions(solved.t0, float(solved.positions[0]), float(solved.speeds[0]),
                                     positions[1:], dt, stop_bar)


def slack_cap(iteration: int, params: Parameters) -> float:
    """第 𝒯 轮的分离松弛上限 δ₀/𝒯，不超过 ε 时取 0"""
    cap = params.slack_start / max(iteration, 1)
    return 0.0 if cap <= params.convergence_eps else cap


@dataclass
class IterationRecord:
    """一轮协商的记录"""
    step: int
    iteration: int
    max_delta: float
    votes_stable: bool
    schedule_fixed: bool
    infeasible: int
    wall_time: float


@dataclass
class AgreementState:
    """协商过程的共享状态"""
    iteration: int = 1
    trajectories: dict[int, Trajectory] = field(default_factory=dict)
    votes: dict[int, SignalSchedule] = field(default_factory=dict)
    previous_votes: dict[int, SignalSchedule] = field(default_factory=dict)
    schedule: SignalSchedule | None = None
    fixed_at: int | None = None
    deltas: list[float] = field(default_factory=list)
    slack_cap: float = 0.0

    @property
    def schedule_fixed(self) -> bool:
        return self.schedule is not None


def votes_stabilized(state: AgreementState) -> bool:
    """当前仍在投票的车辆，其投票与上一轮完全相同"""
    if state.iteration < 2 or not state.votes:
        return False
    for vid, vote in state.votes.items():
        prev = state.previous_votes.get(vid)
        if prev is None or not prev.same_as(vote):
            return False
    return True


@dataclass
class WorldSnapshot:
    """t0 时刻的世界状态

    plans 为 CAV 上一控制步方案平移后的轨迹；reference 为覆盖时域的参考信号方案
    （仅轨迹模式下作为给定信号，联合模式下作为初始投票与候选种子）。
    """
    scene: IntersectionScene
    params: Parameters
    t0: int
    history: SignalSchedule
    vehicles: dict[int, VehicleSnapshot]
    order: dict[str, list[int]]
    groups: list[VehicleGroup]
    reference: SignalSchedule
    plans: dict[int, Trajectory] = field(default_factory=dict)
    white_enabled: bool = True

    @property
    def n0(self) -> int:
        return self.t0 // self.params.steps_per_signal

    def unpassed(self, vid: int) -> bool:
        return self.vehicles[vid].x <= self.scene.stop_bar

    def white_start_ok(self) -> list[str]:
        """停车线前第一辆车为 CAV 的车道"""
        out = []
        for lane, ids in self.order.items():
            first = next((vid for vid in ids if self.unpassed(vid)), None)
            if first is not None and self.vehicles[first].is_cav:
                out.append(lane)
        return out

    def white_keep_ok(self) -> list[str]:
        """停车线前第一辆车不是车队外 CHV 的车道"""
        members = {m for g in self.groups for m in g.members}
        out = []
        for lane in self.scene.lane_ids:
            ids = self.order.get(lane, [])
            first = next((vid for vid in ids if self.unpassed(vid)), None)
            if first is None or self.vehicles[first].is_cav or first in members:
                out.append(lane)
        return out


@dataclass
class AgreementResult:
    """协商结果"""
    schedule: SignalSchedule
    trajectories: dict[int, Trajectory]
    plans: dict[int, Trajectory]
    accels: dict[int, float]
    converged: bool
    iterations: int
    records: list[IterationRecord]
    max_slack: float = 0.0
    held: set[int] = field(default_factory=set)


@dataclass
class _Solved:
    vid: int
    trajectory: Trajectory | None = None
    vote: SignalSchedule | None = None
    slack: float = 0.0


class Agreement:
    """一次控制步内的协商过程"""

    def __init__(self, snapshot: WorldSnapshot, mode: str, settings: RuntimeSettings | None = None,
                 planner: SignalPlanner | None = None):
        if mode not in (JOINT, TRAJECTORIES_ONLY):
            raise ProgramError(f"未知协商模式: {mode}")
        r = snapshot.params.steps_per_signal
        if mode == JOINT and snapshot.t0 % r:
            raise ProgramError("联合协商只能在信号步边界进行")
        self.snap = snapshot
        self.mode = mode
        self.p = snapshot.params
        self.settings = settings or RuntimeSettings()
        self.planner = planner or SignalPlanner(snapshot.scene, snapshot.params)
        self.budget = Budget(self.settings.node_budget, self.settings.time_limit)
        self.stop_bar = snapshot.scene.stop_bar
        self.K = self.p.signal_horizon
        self.H = self.p.horizon_steps
        self.held: set[int] = set()
        self.plans: dict[int, Trajectory] = {}

    # ---- 辅助 ----

    def _cav_ids(self) -> list[int]:
        return sorted(vid for vid, v in self.snap.vehicles.items() if v.is_cav)

    def _voters(self) -> list[int]:
        return sorted(vid for vid in self.snap.vehicles if self.snap.unpassed(vid))

    def _window(self, schedule: SignalSchedule) -> SignalSchedule:
        n0 = self.snap.n0
        return schedule.window(n0, n0 + self.K)

    def _predict_chv(self, vid: int, trajectories: dict[int, Trajectory], schedule: SignalSchedule) -> Trajectory:
        snap = self.snap
        v = snap.vehicles[vid]
        ids = snap.order[v.lane]
        lead = ids[ids.index(vid) - 1] if ids.index(vid) > 0 else None
        leader = trajectories.get(lead) if lead is not None else None
        return predict_chv_trajectory(snap.t0, v.x, v.v, v.lane, schedule, leader, self.H, self.p,
                                      self.stop_bar)

    def _refresh_chvs(self, trajectories: dict[int, Trajectory], schedule: SignalSchedule,
                      solved: dict[int, Trajectory] | None = None):
        """按车道从前到后刷新 CHV 预测，已有模型解的车辆取模型解"""
        for lane in self.snap.scene.lane_ids:
            for vid in self.snap.order.get(lane, []):
                if self.snap.vehicles[vid].is_cav:
                    continue
                if solved and vid in solved:
                    trajectories[vid] = solved[vid]
                else:
                    trajectories[vid] = self._predict_chv(vid, trajectories, schedule)

    def _initial_state(self) -> AgreementState:
        snap = self.snap
        state = AgreementState(slack_cap=slack_cap(1, self.p))
        for vid in self._cav_ids():
            v = snap.vehicles[vid]
            plan = snap.plans.get(vid)
            if plan is None or plan.t0 != snap.t0 or plan.horizon != self.H:
                plan = cruise_trajectory(snap.t0, v.x, v.v, self.H, self.p.traj_step, self.stop_bar)
            state.trajectories[vid] = plan
            self.plans[vid] = plan
        self._refresh_chvs(state.trajectories, snap.reference)
        if self.mode == JOINT:
            window = self._window(snap.reference)
            state.votes = {vid: window.copy() for vid in self._voters()}
        else:
            state.schedule = snap.reference
            state.fixed_at = 0
        return state

    def _inputs(self, state: AgreementState, fixed: bool) -> SharedInputs:
        snap = self.snap
        return SharedInputs(
            scene=snap.scene, params=self.p, t0=snap.t0, n0=snap.n0, history=snap.history,
            vehicles=snap.vehicles, order=snap.order, trajectories=dict(state.trajectories),
            votes={} if fixed else dict(state.votes), groups=snap.groups, slack_cap=state.slack_cap,
            schedule=self._fixed_schedule(state) if fixed else None, white_enabled=snap.white_enabled,
        )

    def _fixed_schedule(self, state: AgreementState) -> SignalSchedule:
        """信号固定模式下使用的方案（末端按保持补齐一步）"""
        schedule = state.schedule
        need = (self.snap.t0 + self.H - 1) // self.p.steps_per_signal + 1
        if schedule.end < need:
            schedule = schedule.extended(need - schedule.end)
        return schedule

    def _candidates(self, state: AgreementState) -> list[SignalSchedule]:
        snap = self.snap
        delays: dict[str, float] = {}
        for vid in self._voters():
            v = snap.vehicles[vid]
            delays[v.lane] = delays.get(v.lane, 0.0) + v.delay + 1.0
        focus = sorted(delays, key=lambda lane: (-delays[lane], snap.scene.lane_ids.index(lane)))
        seeds = [self._window(snap.reference)]
        for vid in sorted(state.votes):
            if not any(state.votes[vid].same_as(s) for s in seeds):
                seeds.append(state.votes[vid])
        return self.planner.candidates(
            snap.history, self.K, focus, seeds=seeds, allow_white=snap.white_enabled,
            white_start_ok=snap.white_start_ok(), white_keep_ok=snap.white_keep_ok(),
            limit=self.settings.candidate_limit,
        )

    def _program(self, vid: int, inputs: SharedInputs, fixed: bool,
                 candidates: list[SignalSchedule]) -> VehicleProgram:
        mode = MODE_FIXED if fixed else MODE_FREE
        if inputs.vehicles[vid].is_cav:
            return build_cav_program(vid, inputs, mode, candidates)
        return build_chv_vote_program(vid, inputs, mode, candidates)

    def first_program(self, vid: int) -> VehicleProgram:
        """第一轮协商中车辆 vid 求解的模型"""
        if vid not in self.snap.vehicles:
            raise ProgramError(f"步 {self.snap.t0} 不存在车辆 {vid}")
        state = self._initial_state()
        state.slack_cap = slack_cap(state.iteration, self.p)
        fixed = state.schedule_fixed
        if fixed and not self.snap.vehicles[vid].is_cav:
            raise ProgramError(f"信号固定模式下 CHV {vid} 不求解模型")
        candidates = [] if fixed else self._candidates(state)
        return self._program(vid, self._inputs(state, fixed), fixed, candidates)

    def _solve(self, vid: int, inputs: SharedInputs, fixed: bool, candidates: list[SignalSchedule]) -> _Solved:
        v = inputs.vehicles[vid]
        program = self._program(vid, inputs, fixed, candidates)
        solution: MipSolution = program.solve(self.budget, self.settings.solver_backend)
        if not solution.has_solution:
            logger.debug(f"车辆 {vid} 的模型无可行解 ({solution.status})")
            return _Solved(vid)
        out = _Solved(vid, trajectory=program.trajectory(solution, self.p, self.stop_bar))
        if not fixed:
            out.vote = program.schedule(solution)
        if v.is_cav:
            out.slack = program.max_slack(solution)
        return out

    def _solve_all(self, state: AgreementState, fixed: bool) -> dict[int, _Solved]:
        inputs = self._inputs(state, fixed)
        candidates = [] if fixed else self._candidates(state)
        ids = self._cav_ids() if fixed else sorted(set(self._cav_ids()) | set(self._voters()))
        if self.settings.workers > 1 and len(ids) > 1:
            with ThreadPoolExecutor(max_workers=self.settings.workers) as pool:
                results = list(pool.map(lambda vid: self._solve(vid, inputs, fixed, candidates), ids))
        else:
            results = [self._solve(vid, inputs, fixed, candidates) for vid in ids]
        # 结果按车辆编号合并
        return {r.vid: r for r in sorted(results, key=lambda r: r.vid)}

    def aggregate(self, state: AgreementState) -> SignalSchedule:
        """求解投票聚合

        Raises:
            AggregationError: 聚合模型无可行解
        """
        inputs = self._inputs(state, fixed=False)
        program = build_vote_aggregation(inputs, self._candidates(state))
        solution = program.solve(self.budget, self.settings.solver_backend)
        if not solution.has_solution:
            raise AggregationError(f"步 {self.snap.t0}: 投票聚合无可行解 ({solution.status})")
        return program.schedule(solution)

    # ---- 主循环 ----

    def run(self) -> AgreementResult:
        p = self.p
        snap = self.snap
        state = self._initial_state()
        records: list[IterationRecord] = []
        converged = False
        max_slack = 0.0
        delta = np.inf

        while True:
            started = time.perf_counter()
            fixed = state.schedule_fixed
            state.slack_cap = slack_cap(state.iteration, p)
            solved = self._solve_all(state, fixed)
            infeasible = sum(1 for s in solved.values() if s.trajectory is None)

            new_traj = dict(state.trajectories)
            max_slack = 0.0
            for vid in self._cav_ids():
                result = solved.get(vid)
                if result is None or result.trajectory is None:
                    # 无可行解时沿用上一轮共享方案
                    self.held.add(vid)
                    continue
                self.held.discard(vid)
                self.plans[vid] = result.trajectory
                max_slack = max(max_slack, result.slack)
                new_traj[vid] = average_cav_trajectory(state.trajectories[vid], result.trajectory,
                                                       state.iteration, p.traj_step, self.stop_bar)
            chv_solved = {vid: s.trajectory for vid, s in solved.items()
                          if not snap.vehicles[vid].is_cav and s.trajectory is not None}
            reference = self._fixed_schedule(state) if fixed else snap.reference
            self._refresh_chvs(new_traj, reference, None if fixed else chv_solved)

            delta = max((new_traj[vid].max_delta(state.trajectories[vid]) for vid in new_traj), default=0.0)
            state.deltas.append(delta)
            state.trajectories = new_traj

            stable = False
            if not fixed:
                state.previous_votes = state.votes
                state.votes = {vid: (solved[vid].vote if solved.get(vid) and solved[vid].vote is not None
                                     else state.previous_votes[vid]) for vid in state.previous_votes}
                stable = votes_stabilized(state)
                deadline = state.iteration >= p.vote_deadline_iter or state.iteration >= p.max_agreement_iters
                if state.iteration >= 2 and (stable or deadline):
                    try:
                        agreed = self.aggregate(state)
                    except AggregationError as e:
                        logger.warning(str(e))
                        records.append(self._record(state, delta, stable, infeasible, started))
                        break
                    unanimous = all(vote.same_as(agreed) for vote in state.votes.values())
                    state.schedule = agreed
                    state.fixed_at = state.iteration if unanimous else state.iteration + 1
                    if not stable:
                        logger.debug(f"步 {snap.t0}: 第 {state.iteration} 轮强制聚合投票")

            records.append(self._record(state, delta, stable, infeasible, started))
            logger.debug(f"步 {snap.t0} 第 {state.iteration} 轮: Δ={delta:.3f} ft, 投票稳定={stable}, "
                         f"方案固定={state.schedule_fixed}, 无解 {infeasible}")

            settled = state.schedule_fixed and state.fixed_at is not None and state.fixed_at <= state.iteration
            if settled and delta <= p.convergence_eps and max_slack <= SLACK_TOL and not self.held:
                converged = True
                break
            if state.iteration >= p.max_agreement_iters:
                converged = (settled and delta <= 10 * p.convergence_eps and max_slack <= SLACK_TOL
                             and not self.held)
                break
            state.iteration += 1

        if not converged:
            logger.warning(f"步 {snap.t0}: 协商未收敛 (Δ={delta:.3f} ft, 迭代 {state.iteration})")
        schedule = state.schedule if state.schedule is not None else snap.reference
        accels = {vid: float(self.plans[vid].accels[0]) for vid in self._cav_ids()}
        return AgreementResult(
            schedule=self._window(schedule) if self.mode == JOINT else schedule,
            trajectories=state.trajectories, plans=dict(self.plans), accels=accels, converged=converged,
            iterations=state.iteration, records=records, max_slack=max_slack, held=set(self.held),
        )

    def _record(self, state: AgreementState, delta: float, stable: bool, infeasible: int,
                started: float) -> IterationRecord:
        return IterationRecord(self.snap.t0, state.iteration, float(delta), stable, state.schedule_fixed,
                               infeasible, time.perf_counter() - started)


def run_agreement(snapshot: WorldSnapshot, mode: str = JOINT, settings: RuntimeSettings | None = None,
                  planner: SignalPlanner | None = None) -> AgreementResult:
    """运行一次协商

    Args:
        snapshot: t0 时刻的世界状态
        mode: joint（信号与轨迹联合协商，仅在信号步边界）或 trajectories_only（给定信号）
        settings: 运行时设置（线程数、求解预算、后端）
        planner: 信号方案规划器，缺省按场景新建

    Returns:
        AgreementResult：协商后的信号方案、各 CAV 第一步加速度与迭代记录
    """
    return Agreement(snapshot, mode, settings, planner).run()


def iteration_rows(records: Iterable[IterationRecord]) -> list[dict]:
    """迭代记录转为表格行（不含耗时）"""
    return [{"step": r.step, "iteration": r.iteration, "max_delta": round(r.max_delta, 6),
             "votes_stable": int(r.votes_stable), "schedule_fixed": int(r.schedule_fixed),
             "infeasible": r.infeasible} for r in records]
