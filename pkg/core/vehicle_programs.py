#!/usr/bin/env python3
"""
车辆级优化模型

- build_cav_program：CAV 的轨迹 + 投票模型（进度、舒适、白灯激励、松弛惩罚）
- build_chv_vote_program：CHV 的投票模型，跟驰关系以选择变量 + 大M行线性化
- build_vote_aggregation：按延误加权的投票距离最小化，选出一个合法信号方案

位置、速度以加速度变量的线性表达式给出，不单独建变量。信号变量覆盖 [n0, n0+K)，
之前的步取已执行历史。所有大M都由可达区间逐行收紧。
"""
from __future__ import annotations

import math
from collections.abc import Iterable
from dataclasses import dataclass, field

import numpy as np

from core.errors import ProgramError
from core.opt_engine import EQ, GE, LE, Budget, Cut, LinearProgram, LinExpr, MipSolution, apply_cuts, solve_mip
from core.scene import IntersectionScene
from core.signal_rules import signal_rows
from core.traffic import SignalSchedule, Trajectory, VehicleGroup, VehicleKind
from models.scenario_schema import Parameters

MODE_FREE = "signal_free_vars"
MODE_FIXED = "signal_fixed"
KINDS = ("g", "w", "y")


@dataclass(frozen=True)
class VehicleSnapshot:
    """车辆在 t0 时刻的状态"""
    id: int
    lane: str
    kind: VehicleKind
    x: float
    v: float
    delay: float = 0.0

    @property
    def is_cav(self) -> bool:
        return self.kind is VehicleKind.CAV


@dataclass
class SharedInputs:
    """协商中共享的数据

    trajectories 为所有车辆的预测轨迹（同一 t0、同一时域）；votes 为各车对 [n0, n0+K) 的投票；
    history 为 n0 之前已执行的信号；schedule 在信号固定模式下给出覆盖时域的方案。
    """
    scene: IntersectionScene
    params: Parameters
    t0: int
    n0: int
    history: SignalSchedule
    vehicles: dict[int, VehicleSnapshot]
    order: dict[str, list[int]]
    trajectories: dict[int, Trajectory]
    votes: dict[int, SignalSchedule] = field(default_factory=dict)
    groups: list[VehicleGroup] = field(default_factory=list)
    slack_cap: float = 0.0
    schedule: SignalSchedule | None = None
    white_enabled: bool = True

    @property
    def horizon(self) -> int:
        return self.params.horizon_steps

    @property
    def r(self) -> int:
        return self.params.steps_per_signal

    @property
    def signal_steps(self) -> int:
        return self.params.signal_horizon

    @property
    def stop_bar(self) -> float:
        return self.scene.stop_bar

    def validate(self):
        """检查时域一致性"""
        h = self.horizon
        for vid, traj in self.trajectories.items():
            if traj.horizon != h or traj.t0 != self.t0:
                raise ProgramError(f"车辆 {vid} 的共享轨迹时域不一致 (t0={traj.t0}, H={traj.horizon})")
        for vid, vote in self.votes.items():
            if vote.start != self.n0 or vote.steps != self.signal_steps:
                raise ProgramError(f"车辆 {vid} 的投票未覆盖信号窗口")
        if self.schedule is None and self.history.steps and self.history.end != self.n0:
            raise ProgramError("信号历史与窗口不衔接")

    # ---- 时间映射 ----

    def clamp(self, t: int) -> int:
        return min(max(t, 0), self.horizon)

    def priority_step(self, n: int) -> int:
        """优先约束与投票权重使用的轨迹步"""
        return self.clamp(n * self.r - 1 - self.t0)

    def initiation_step(self, n: int) -> int:
        """白灯启动/终止判断使用的轨迹步"""
        return self.clamp(n * self.r - self.t0)

    # ---- 车辆关系 ----

    def passed(self, vid: int, t: int) -> int:
        traj = self.trajectories.get(vid)
        if traj is None:
            return int(self.vehicles[vid].x > self.stop_bar)
        return int(traj.passed[self.clamp(t)])

    def predecessors(self, vid: int) -> list[int]:
        lane = self.vehicles[vid].lane
        ids = self.order[lane]
        return ids[:ids.index(vid)]

    def leader(self, vid: int) -> int | None:
        pred = self.predecessors(vid)
        return pred[-1] if pred else None

    def first_unpassed(self, lane: str, t: int) -> int | None:
        for vid in self.order.get(lane, []):
            if not self.passed(vid, t):
                return vid
        return None

    def is_member(self, vid: int) -> bool:
        return any(g.is_member(vid) for g in self.groups)

    def weight(self, vid: int) -> float:
        return self.vehicles[vid].delay + 1.0

    def effective_vote(self, vid: int) -> SignalSchedule:
        """投票本车道部分与未通过前车的投票取并（同步绿灯优先于白灯）"""
        vote = self.votes[vid].copy()
        lane = self.vehicles[vid].lane
        for n in range(vote.start, vote.end):
            t = self.priority_step(n)
            need_g = any(self.votes[j].value(lane, "g", n) for j in self.predecessors(vid)
                         if j in self.votes and not self.passed(j, t))
            need_w = any(self.votes[j].value(lane, "w", n) for j in self.predecessors(vid)
                         if j in self.votes and not self.passed(j, t))
            k = n - vote.start
            li = vote.lane_index(lane)
            if need_g:
                vote.bits[:, li, k] = 0
                vote.bits[0, li, k] = 1
            elif need_w and not vote.bits[0, li, k]:
                vote.bits[:, li, k] = 0
                vote.bits[1, li, k] = 1
        return vote


def reach_bounds(x0: float, v0: float, horizon: int, p: Parameters) -> tuple[np.ndarray, ...]:
    """位置与速度的可达区间 (xlo, xhi, vlo, vhi)，长度 H+1"""
    dt = p.traj_step
    xlo, xhi = np.empty(horizon + 1), np.empty(horizon + 1)
    vlo, vhi = np.empty(horizon + 1), np.empty(horizon + 1)
    xlo[0] = xhi[0] = x0
    vlo[0] = vhi[0] = v0
    for t in range(horizon):
        vlo[t + 1] = max(p.speed_min, vlo[t] + p.accel_min * dt)
        vhi[t + 1] = min(p.speed_max, vhi[t] + p.accel_max * dt)
        xlo[t + 1] = xlo[t] + max(0.5 * vlo[t] * dt, vlo[t] * dt + 0.5 * p.accel_min * dt * dt)
        xhi[t + 1] = xhi[t] + min(vhi[t] * dt + 0.5 * p.accel_max * dt * dt, 0.5 * (vhi[t] + p.speed_max) * dt)
    return xlo, xhi, vlo, vhi


@dataclass
class VehicleProgram:
    """一个车辆（或聚合）模型及其解码信息"""
    lp: LinearProgram
    kind: str
    vehicle: int | None
    t0: int
    x0: float = 0.0
    v0: float = 0.0
    accel_vars: list[int] = field(default_factory=list)
    signal_vars: dict[tuple[str, str, int], int] = field(default_factory=dict)
    slack_vars: list[int] = field(default_factory=list)
    warm_starts: list[dict[str, float]] = field(default_factory=list)
    fixed_schedule: SignalSchedule | None = None
    n0: int = 0
    signal_steps: int = 0
    lanes: tuple[str, ...] = ()

    def trajectory(self, solution: MipSolution, p: Parameters, stop_bar: float) -> Trajectory:
        accels = [solution.values[i] for i in self.accel_vars]
        accels = np.clip(accels, p.accel_min, p.accel_max)
        return Trajectory.from_accels(self.t0, self.x0, self.v0, accels, p.traj_step, stop_bar)

    def schedule(self, solution: MipSolution) -> SignalSchedule:
        """解码 [n0, n0+K) 的信号方案"""
        if self.fixed_schedule is not None and not self.signal_vars:
            return self.fixed_schedule.window(self.n0, self.n0 + self.signal_steps)
        out = SignalSchedule.all_red(self.lanes, self.n0, self.signal_steps)
        for (lane, kind, n), i in self.signal_vars.items():
            if round(solution.values[i]):
                out.bits[KINDS.index(kind), out.lane_index(lane), n - self.n0] = 1
        return out

    def max_slack(self, solution: MipSolution) -> float:
        if not self.slack_vars:
            return 0.0
        return float(max(solution.values[i] for i in self.slack_vars))

    def solve(self, budget: Budget | None = None, backend: str = "native") -> MipSolution:
        starts = self.warm_starts if backend == "native" else ()
        return solve_mip(self.lp, budget, warm_starts=starts, backend=backend)


class _Builder:
    """模型构建的公共部分：运动学表达式、信号变量与相位约束"""

    def __init__(self, name: str, inputs: SharedInputs, mode: str):
        if mode not in (MODE_FREE, MODE_FIXED):
            raise ProgramError(f"未知模型模式: {mode}")
        inputs.validate()
        self.inputs = inputs
        self.p = inputs.params
        self.lp = LinearProgram(name)
        self.mode = mode
        self.signal_vars: dict[tuple[str, str, int], int] = {}
        if mode == MODE_FIXED and inputs.schedule is None:
            raise ProgramError("信号固定模式需要给定信号方案")
        if mode == MODE_FREE and inputs.t0 != inputs.n0 * inputs.r:
            raise ProgramError(f"信号为变量时 t0={inputs.t0} 必须位于信号步边界")

    def var(self, name: str, lb: float, ub: float, binary: bool = False) -> int:
        return self.lp.add_var(name, lb, ub, binary)

    # ---- 信号 ----

    def create_signals(self):
        inp = self.inputs
        if self.mode == MODE_FIXED:
            return
        for lane in inp.scene.lane_ids:
            for n in range(inp.n0, inp.n0 + inp.signal_steps):
                for kind in KINDS:
                    i = self.var(f"{kind}_{lane}_{n}", 0.0, 1.0, binary=True)
                    self.signal_vars[(lane, kind, n)] = i
                if not inp.white_enabled:
                    self.lp.fix(f"w_{lane}_{n}", 0.0)

    def sig(self, lane: str, kind: str, n: int) -> LinExpr:
        inp = self.inputs
        if self.mode == MODE_FIXED:
            sched = inp.schedule
            if n >= sched.start:
                return LinExpr(const=sched.value(lane, kind, min(n, sched.end - 1)))
        elif n >= inp.n0:
            return LinExpr.var(self.signal_vars[(lane, kind, n)])
        hist = inp.history
        if hist.steps and hist.start <= n < hist.end:
            return LinExpr(const=hist.value(lane, kind, n))
        return LinExpr()

    def open(self, lane: str, n: int) -> LinExpr:
        return self.sig(lane, "g", n) + self.sig(lane, "w", n)

    def add_signal_rows(self):
        """相位规则、白灯启动/终止规则"""
        if self.mode == MODE_FIXED:
            return
        inp = self.inputs
        end = inp.n0 + inp.signal_steps
        record_start = inp.history.start if inp.history.steps else inp.n0
        for row in signal_rows(inp.scene, self.p, end=end, lo=inp.n0, record_start=record_start):
            expr = LinExpr()
            for (lane, kind, z), coef in row.terms.items():
                expr = expr + self.sig(lane, kind, z) * coef
            self.lp.add_constraint(expr, row.sense, row.rhs, name=f"{row.rule}_{row.lane}_{row.step}")
        for lane in inp.scene.lane_ids:
            self.add_white_rules(lane)

    def committed_white(self, lane: str) -> int:
        """历史中最短白灯要求延续到的最后一步（不含），没有则为 n0"""
        inp = self.inputs
        hist = inp.history
        if not hist.steps or not hist.value(lane, "w", hist.end - 1):
            return inp.n0
        s = hist.end - 1
        while s - 1 >= hist.start and hist.value(lane, "w", s - 1):
            s -= 1
        if s - 1 >= hist.start and hist.value(lane, "g", s - 1):
            return inp.n0
        lane_spec = inp.scene.lane(lane)
        return s + self.p.signal_steps(self.p.min_white(lane_spec.movement))

    def add_white_rules(self, lane: str):
        inp = self.inputs
        committed = self.committed_white(lane)
        for n in range(inp.n0, inp.n0 + inp.signal_steps):
            first = inp.first_unpassed(lane, inp.initiation_step(n))
            w, w_prev = self.sig(lane, "w", n), self.sig(lane, "w", n - 1)
            if first is None or not inp.vehicles[first].is_cav:
                # 停车线后第一辆车不是 CAV 时不能启动白灯
                self.lp.add_constraint(w - w_prev, LE, 0.0, name=f"white_start_{lane}_{n}")
            if first is not None and not inp.vehicles[first].is_cav and not inp.is_member(first) and n >= committed:
                # 第一辆车是不在车队中的 CHV：终止白灯
                self.lp.add_constraint(w, LE, 0.0, name=f"white_end_{lane}_{n}")

    def add_priority(self, vid: int):
        """前车投票的优先约束：本车道的绿灯/白灯不少于未通过前车的投票"""
        if self.mode == MODE_FIXED:
            return
        inp = self.inputs
        lane = inp.vehicles[vid].lane
        preds = [j for j in inp.predecessors(vid) if j in inp.votes]
        if not preds:
            return
        for n in range(inp.n0, inp.n0 + inp.signal_steps):
            t = inp.priority_step(n)
            live = [j for j in preds if not inp.passed(j, t)]
            if any(inp.votes[j].value(lane, "g", n) for j in live):
                self.lp.add_constraint(self.sig(lane, "g", n), GE, 1.0, name=f"prio_g_{vid}_{n}")
            elif any(inp.votes[j].value(lane, "w", n) for j in live):
                self.lp.add_constraint(self.sig(lane, "w", n), GE, 1.0, name=f"prio_w_{vid}_{n}")

    def white_incentive(self) -> LinExpr:
        expr = LinExpr()
        if self.p.white_incentive_weight == 0:
            return expr
        for (lane, kind, n), i in self.signal_vars.items():
            if kind == "w":
                expr.add_term(i, -self.p.white_incentive_weight)
        return expr

    # ---- 运动学 ----

    def motion(self, snap: VehicleSnapshot, accel_lb: float, accel_ub: float
               ) -> tuple[list[int], list[LinExpr], list[LinExpr]]:
        """加速度变量与位置/速度表达式（x[0], v[0] 为常数）"""
        h, dt = self.inputs.horizon, self.p.traj_step
        accels = [self.var(f"a_{t}", accel_lb, accel_ub) for t in range(h)]
        xs, vs = [LinExpr(const=snap.x)], [LinExpr(const=snap.v)]
        for t in range(h):
            a = LinExpr.var(accels[t])
            xs.append(xs[t] + vs[t] * dt + a * (0.5 * dt * dt))
            vs.append(vs[t] + a * dt)
        return accels, xs, vs

    def passage(self, snap: VehicleSnapshot, xs: list[LinExpr], xlo: np.ndarray, xhi: np.ndarray
                ) -> list[LinExpr]:
        """γ_t：可达区间能确定时取常数，否则建 0-1 变量并与位置关联"""
        b = self.inputs.stop_bar
        gammas = [LinExpr(const=1.0 if snap.x > b else 0.0)]
        for t in range(1, len(xs)):
            if snap.x > b or xlo[t] > b:
                gammas.append(LinExpr(const=1.0))
                continue
            if xhi[t] <= b:
                gammas.append(LinExpr(const=0.0))
                continue
            i = self.var(f"gamma_{t}", 0.0, 1.0, binary=True)
            g = LinExpr.var(i)
            # γ=0 ⇒ x ≤ b；γ=1 ⇒ x ≥ b
            self.lp.add_constraint(xs[t] - b, LE, g * (xhi[t] - b), name=f"pass_up_{t}")
            self.lp.add_constraint(xs[t] - b, GE, (1 - g) * (xlo[t] - b), name=f"pass_lo_{t}")
            gammas.append(g)
        return gammas

    def passage_cuts(self, gammas: list[LinExpr], leader_passed: list[int] | None) -> list[Cut]:
        """γ 单调与前车约束"""
        cuts = []
        names = {t: self.lp.names[next(iter(g.terms))] for t, g in enumerate(gammas) if g.terms}
        for t in sorted(names):
            if t + 1 in names:
                cuts.append(Cut({names[t]: 1.0, names[t + 1]: -1.0}, LE, 0.0, f"mono_{t}"))
            elif t + 1 < len(gammas) and gammas[t + 1].const == 0.0 and not gammas[t + 1].terms:
                cuts.append(Cut({names[t]: 1.0}, LE, 0.0, f"mono_{t}"))
            if leader_passed is not None and not leader_passed[t]:
                cuts.append(Cut({names[t]: 1.0}, LE, 0.0, f"follow_{t}"))
        return cuts

    def speed_rows(self, vs: list[LinExpr]):
        for t in range(1, len(vs)):
            self.lp.add_constraint(vs[t], GE, self.p.speed_min, name=f"vmin_{t}")
            self.lp.add_constraint(vs[t], LE, self.p.speed_max, name=f"vmax_{t}")

    def gap_rows(self, vid: int, xs: list[LinExpr], vs: list[LinExpr], reaction: float):
        """与前车预测轨迹的安全间距"""
        inp = self.inputs
        lead = inp.leader(vid)
        if lead is None or lead not in inp.trajectories:
            return None
        lead_traj = inp.trajectories[lead]
        for t in range(1, len(xs)):
            limit = float(lead_traj.positions[t]) - self.p.same_lane_gap - self.p.vehicle_length
            self.lp.add_constraint(xs[t] + vs[t] * reaction, LE, limit, name=f"gap_{t}")
        return lead

    def progress(self, lane: str, xs: list[LinExpr]) -> LinExpr:
        r_l = self.inputs.scene.lane(lane).destination
        expr = LinExpr()
        for x in xs[1:]:
            expr = expr + (r_l - x)
        return expr

    def signal_warm_starts(self, candidates: Iterable[SignalSchedule]) -> list[dict[str, float]]:
        starts = []
        inp = self.inputs
        for cand in candidates:
            if cand.start != inp.n0 or cand.steps < inp.signal_steps:
                continue
            if not inp.white_enabled and cand.bits[1].any():
                continue
            assign = {}
            for (lane, kind, n), i in self.signal_vars.items():
                assign[self.lp.names[i]] = float(cand.value(lane, kind, n))
            starts.append(assign)
        return starts

    def program(self, kind: str, vehicle: int | None, snap: VehicleSnapshot | None, accels: list[int],
                slack: list[int]) -> VehicleProgram:
        inp = self.inputs
        return VehicleProgram(
            lp=self.lp, kind=kind, vehicle=vehicle, t0=inp.t0,
            x0=snap.x if snap else 0.0, v0=snap.v if snap else 0.0,
            accel_vars=accels, signal_vars=dict(self.signal_vars), slack_vars=slack,
            fixed_schedule=inp.schedule if self.mode == MODE_FIXED else None,
            n0=inp.n0, signal_steps=inp.signal_steps, lanes=inp.scene.lane_ids,
        )


def _signal_step(inp: SharedInputs, t: int) -> int:
    """进入状态 t 的那一步所在的信号步"""
    return (inp.t0 + t - 1) // inp.r


def build_cav_program(vehicle_id: int, inputs: SharedInputs, mode: str = MODE_FREE,
                      candidates: Iterable[SignalSchedule] = (), cuts: bool = True) -> VehicleProgram:
    """构建 CAV 的轨迹 + 投票模型

    Args:
        vehicle_id: 车辆编号
        inputs: 共享数据
        mode: signal_free_vars（信号为变量）或 signal_fixed（信号取 inputs.schedule）
        candidates: 候选信号方案，作为热启动
        cuts: 是否加入 γ 与分离顺序变量的割平面

    Returns:
        VehicleProgram
    """
    inp = inputs
    p = inp.params
    snap = inp.vehicles[vehicle_id]
    b = inp.stop_bar
    builder = _Builder(f"cav_{vehicle_id}", inp, mode)
    lp = builder.lp

    accels, xs, vs = builder.motion(snap, p.accel_min, p.accel_max)
    xlo, xhi, vlo, vhi = reach_bounds(snap.x, snap.v, inp.horizon, p)
    builder.speed_rows(vs)

    # 舒适项 |v_{t+1} - v_t|
    comfort = LinExpr()
    for t in range(inp.horizon):
        lp_i = builder.var(f"lp_{t}", 0.0, math.inf)
        lm_i = builder.var(f"lm_{t}", 0.0, math.inf)
        lp.add_constraint(vs[t + 1] - vs[t], EQ, LinExpr.var(lp_i) - LinExpr.var(lm_i), name=f"dv_{t}")
        comfort = comfort + LinExpr.var(lp_i) + LinExpr.var(lm_i)

    lead = builder.gap_rows(vehicle_id, xs, vs, p.cav_reaction)
    objective = builder.progress(snap.lane, xs) + comfort * p.comfort_weight
    slack_vars: list[int] = []
    cut_rows: list[Cut] = []

    if snap.x > b:
        # 已通过停车线：只保留运动学约束
        builder.create_signals()
        builder.add_signal_rows()
        builder.add_priority(vehicle_id)
        lp.set_objective(objective + builder.white_incentive())
        program = builder.program("cav", vehicle_id, snap, accels, slack_vars)
        program.warm_starts = builder.signal_warm_starts(candidates)
        return program

    builder.create_signals()
    gammas = builder.passage(snap, xs, xlo, xhi)
    lead_passed = [inp.passed(lead, t) for t in range(inp.horizon + 1)] if lead is not None else None
    cut_rows.extend(builder.passage_cuts(gammas, lead_passed))

    # 红灯停车：x_t + ΔT·v_t ≤ b - S，放行或已通过时松弛
    for t in range(1, inp.horizon + 1):
        open_ = builder.open(snap.lane, _signal_step(inp, t))
        if open_.const >= 1.0 or gammas[t - 1].const >= 1.0:
            continue
        big = xhi[t] + p.traj_step * vhi[t] - (b - p.stopbar_gap)
        if big <= 0:
            continue
        lp.add_constraint(xs[t] + vs[t] * p.traj_step, LE,
                          (b - p.stopbar_gap) + open_ * big + gammas[t - 1] * big, name=f"red_{t}")

    # 白灯下与冲突车队的分离
    slack_vars = _separation_rows(builder, vehicle_id, xs, xlo, xhi, gammas, cut_rows if cuts else None)
    if slack_vars:
        objective = objective + LinExpr({i: p.slack_penalty for i in slack_vars})

    builder.add_signal_rows()
    builder.add_priority(vehicle_id)
    lp.set_objective(objective + builder.white_incentive())
    if cuts and cut_rows:
        builder.lp = apply_cuts(lp, cut_rows)
    program = builder.program("cav", vehicle_id, snap, accels, slack_vars)
    program.warm_starts = builder.signal_warm_starts(candidates)
    return program


def _separation_rows(builder: _Builder, vid: int, xs: list[LinExpr], xlo: np.ndarray, xhi: np.ndarray,
                     gammas: list[LinExpr], cut_rows: list[Cut] | None) -> list[int]:
    """冲突车队分离约束

    车队头尾到冲突点的距离为常数 c，因此约束等价于本车车身中心到 F′+𝓛/2 的距离
    不小于 (ζ+𝓛+2ρ-c-δ)/2，用一个先后顺序变量 σ 表示“之前/之后”。
    """
    inp, p, lp = builder.inputs, builder.p, builder.lp
    snap = inp.vehicles[vid]
    lane = snap.lane
    length = p.vehicle_length
    slack: list[int] = []
    cap = max(inp.slack_cap, 0.0)

    for other in sorted(inp.scene.conflicts(lane), key=inp.scene.lane_ids.index):
        f_ego = inp.scene.conflict_point(lane, other)
        f_other = inp.scene.conflict_point(other, lane)
        for q, group in enumerate(g for g in inp.groups if g.lane == other):
            if group.leader not in inp.trajectories or group.last not in inp.trajectories:
                continue
            head_all, tail_all = group.head_tail(inp.trajectories, length)
            prev_sigma: tuple[int, float, float] | None = None
            for t in range(1, inp.horizon + 1):
                if not inp.passed(group.leader, t) or gammas[t].const == 0.0 and not gammas[t].terms:
                    prev_sigma = None
                    continue
                white = builder.sig(lane, "w", _signal_step(inp, t))
                if not white.terms and white.const < 1.0:
                    prev_sigma = None
                    continue
                head, tail = float(head_all[t]), float(tail_all[t])
                zeta = head - tail
                c = abs(head - f_other) + abs(tail - f_other)
                need = zeta + length + 2 * p.group_gap - c
                if need <= length:
                    prev_sigma = None
                    continue
                center = f_ego + length / 2
                lo, hi = center - need / 2, center + need / 2
                if xhi[t] <= lo or xlo[t] >= hi:
                    prev_sigma = None
                    continue

                sigma = builder.var(f"sigma_{other}_{q}_{t}", 0.0, 1.0, binary=True)
                s = LinExpr.var(sigma)
                if cap > 0:
                    d_i = builder.var(f"delta_{other}_{q}_{t}", 0.0, cap)
                    slack.append(d_i)
                    d = LinExpr.var(d_i)
                else:
                    d = LinExpr()
                relax = (1 - white) + (1 - gammas[t])
                big_before = xhi[t] - lo + 1.0
                big_after = hi - xlo[t] + 1.0
                # σ=1：本车在冲突区之前；σ=0：之后
                lp.add_constraint(xs[t] - d * 0.5, LE, lo + (1 - s) * big_before + relax * big_before,
                                  name=f"sep_before_{other}_{q}_{t}")
                lp.add_constraint(xs[t] + d * 0.5, GE, hi - s * big_after - relax * big_after,
                                  name=f"sep_after_{other}_{q}_{t}")
                if cut_rows is not None and prev_sigma is not None:
                    prev_index, prev_hi, _ = prev_sigma
                    if prev_hi - lo > cap:
                        cut_rows.append(Cut({lp.names[sigma]: 1.0, lp.names[prev_index]: -1.0}, LE, 0.0,
                                            f"order_{other}_{q}_{t}"))
                prev_sigma = (sigma, hi, lo)
    return slack


@dataclass(frozen=True)
class _Candidate:
    """取小/取大中的一个候选项及其取值区间"""
    name: str
    expr: LinExpr
    lo: float
    hi: float


def _interval(c0: float, cx: float, cv: float, xr: tuple[float, float], vr: tuple[float, float],
              co: float = 0.0, open_: LinExpr | None = None) -> tuple[float, float]:
    """c0 + cx·x + cv·v + co·open 在区间上的范围"""
    lo = hi = c0
    for c, (a, b) in ((cx, xr), (cv, vr)):
        lo += min(c * a, c * b)
        hi += max(c * a, c * b)
    if open_ is not None:
        if open_.terms:
            lo, hi = lo + min(0.0, co), hi + max(0.0, co)
        else:
            lo, hi = lo + co * open_.const, hi + co * open_.const
    return lo, hi


def build_chv_vote_program(vehicle_id: int, inputs: SharedInputs, mode: str = MODE_FREE,
                           candidates: Iterable[SignalSchedule] = ()) -> VehicleProgram:
    """构建 CHV 投票模型

    跟驰关系 a = max{A1, A2, min{B1..B4}} 以选择变量 s（取小）、u（取大）线性化，
    目标中的 M(a - d) 项把加速度压到跟驰值 d 上。越过停车线后 B4 由 γ 松弛。
    """
    inp = inputs
    p = inp.params
    snap = inp.vehicles[vehicle_id]
    b = inp.stop_bar
    dt = p.traj_step
    a1, a2 = p.alpha1, p.alpha2
    builder = _Builder(f"chv_{vehicle_id}", inp, mode)
    lp = builder.lp

    accels, xs, vs = builder.motion(snap, p.accel_min, p.accel_max)
    xlo, xhi, vlo, vhi = reach_bounds(snap.x, snap.v, inp.horizon, p)
    builder.create_signals()
    gammas = builder.passage(snap, xs, xlo, xhi)
    lead = inp.leader(vehicle_id)
    lead_traj = inp.trajectories.get(lead) if lead is not None else None

    tracking = LinExpr()
    for t in range(inp.horizon):
        x, v = xs[t], vs[t]
        xr, vr = (xlo[t], xhi[t]), (vlo[t], vhi[t])
        gamma = gammas[t]
        open_ = builder.open(snap.lane, (inp.t0 + t) // inp.r)

        uppers = [
            _Candidate("amax", LinExpr(const=p.accel_max), p.accel_max, p.accel_max),
            _Candidate("vmax", (p.speed_max - v) * (1.0 / dt), *_interval(p.speed_max / dt, 0.0, -1.0 / dt, xr, vr)),
        ]
        if lead_traj is not None:
            lx, lv = float(lead_traj.positions[t]), float(lead_traj.speeds[t])
            c0 = a1 * lv + a2 * (lx - p.vehicle_length - p.same_lane_gap)
            cv = -a1 - a2 * p.chv_reaction
            uppers.append(_Candidate("follow", x * -a2 + v * cv + c0, *_interval(c0, -a2, cv, xr, vr)))
        # γ 为变量时信号项带 M·γ 松弛，取值上界不受限
        relaxed = bool(gamma.terms)
        if not (gamma.const >= 1.0 and not relaxed):
            co = a1 * p.speed_max + a2 * p.stopbar_gap
            c0 = a2 * (b - p.stopbar_gap)
            expr = open_ * co + x * -a2 + v * -a1 + c0
            uppers.append(_Candidate("signal", expr, *_interval(c0, -a2, -a1, xr, vr, co, open_)))

        def upper_hi(c: _Candidate) -> float:
            return math.inf if c.name == "signal" and relaxed else c.hi

        # 下界高于其余某项上界的候选不可能取到最小值
        live = [c for c in uppers
                if all(c.lo <= upper_hi(o) + 1e-9 for o in uppers if o is not c)]
        m_lo = min(c.lo for c in live)
        m_hi = min(upper_hi(c) for c in live)
        m = LinExpr.var(lp.add_var(f"m_{t}", m_lo, m_hi))
        selectors = []
        for c in live:
            if c.name == "signal" and relaxed:
                lp.add_constraint(m, LE, c.expr + gamma * (m_hi - c.lo + 1.0), name=f"min_{c.name}_{t}")
            else:
                lp.add_constraint(m, LE, c.expr, name=f"min_{c.name}_{t}")
            if len(live) == 1:
                lp.add_constraint(m, GE, c.expr, name=f"sel_{c.name}_{t}")
                continue
            s = LinExpr.var(lp.add_var(f"s_{c.name}_{t}", 0.0, 1.0, binary=True))
            selectors.append(s)
            lp.add_constraint(m, GE, c.expr - (1 - s) * (c.hi - m_lo + 1.0), name=f"sel_{c.name}_{t}")
            if c.name == "signal" and relaxed:
                lp.add_constraint(s + gamma, LE, 1.0, name=f"sel_pass_{t}")
        if selectors:
            lp.add_constraint(sum(selectors, LinExpr()), EQ, 1.0, name=f"sel_one_{t}")

        lowers = [
            _Candidate("amin", LinExpr(const=p.accel_min), p.accel_min, p.accel_min),
            _Candidate("vmin", (p.speed_min - v) * (1.0 / dt), *_interval(p.speed_min / dt, 0.0, -1.0 / dt, xr, vr)),
            _Candidate("m", m, m_lo, m_hi),
        ]
        live = [c for c in lowers if all(c.hi >= o.lo - 1e-9 for o in lowers if o is not c)]
        d_lo = max(c.lo for c in live)
        d_hi = max(c.hi for c in live)
        d = LinExpr.var(lp.add_var(f"d_{t}", d_lo, d_hi))
        pickers = []
        for c in live:
            lp.add_constraint(d, GE, c.expr, name=f"max_{c.name}_{t}")
            if len(live) == 1:
                lp.add_constraint(d, LE, c.expr, name=f"pick_{c.name}_{t}")
                continue
            u = LinExpr.var(lp.add_var(f"u_{c.name}_{t}", 0.0, 1.0, binary=True))
            pickers.append(u)
            lp.add_constraint(d, LE, c.expr + (1 - u) * (d_hi - c.lo + 1.0), name=f"pick_{c.name}_{t}")
        if pickers:
            lp.add_constraint(sum(pickers, LinExpr()), EQ, 1.0, name=f"pick_one_{t}")

        a = LinExpr.var(accels[t])
        lp.add_constraint(a, GE, d, name=f"track_{t}")
        tracking = tracking + (a - d)

    builder.add_signal_rows()
    builder.add_priority(vehicle_id)
    lp.set_objective(builder.progress(snap.lane, xs) + tracking * p.tracking_penalty + builder.white_incentive())
    program = builder.program("chv", vehicle_id, snap, accels, [])
    program.warm_starts = builder.signal_warm_starts(candidates)
    return program


def build_vote_aggregation(inputs: SharedInputs, candidates: Iterable[SignalSchedule] = ()) -> VehicleProgram:
    """投票聚合模型

    投票是 0/1 常数，因此 |g - ĝ| = ĝ + (1 - 2ĝ)·g，按 (车道, 步) 汇总权重后目标是信号变量的线性函数。
    权重为 (𝒟+1)(1-γ̂)，投票先按同车道前车的优先关系取有效投票。
    """
    inp = inputs
    builder = _Builder("aggregation", inp, MODE_FREE)
    builder.create_signals()
    builder.add_signal_rows()

    effective = {vid: inp.effective_vote(vid) for vid in sorted(inp.votes)}
    objective = LinExpr()
    for vid, vote in effective.items():
        weight = inp.weight(vid)
        for n in range(inp.n0, inp.n0 + inp.signal_steps):
            if inp.passed(vid, inp.priority_step(n)):
                continue
            for lane in inp.scene.lane_ids:
                for kind in ("g", "w"):
                    voted = vote.value(lane, kind, n)
                    objective.add_term(builder.signal_vars[(lane, kind, n)], weight * (1 - 2 * voted))
                    objective.const += weight * voted
    builder.lp.set_objective(objective)
    program = builder.program("aggregation", None, None, [], [])
    program.warm_starts = builder.signal_warm_starts(list(effective.values()) + list(candidates))
    return program
