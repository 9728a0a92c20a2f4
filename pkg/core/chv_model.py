#!/usr/bin/env python3
"""
线性跟驰模型

人工驾驶车辆的加速度取自：
    a = max{ a̲, (v̲-v)/ΔT, min{ ā, (v̄-v)/ΔT, 跟驰项, 信号项 + M·γ } }
跟驰项  α1(v̂_前 - v) + α2((x̂_前 - x - 𝓛) - D - τ̂·v)
信号项  α1((g+w)·v̄ - v) + α2((b - x) - (1-g-w)·S)
没有前车时跟驰项不参与取小；越过停车线后信号项失效。
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from core.traffic import SignalSchedule, Trajectory
from models.scenario_schema import Parameters

FOLLOWING = "following"
SIGNAL = "signal"


@dataclass(frozen=True)
class ChvContext:
    """单步跟驰输入"""
    x: float
    v: float
    stop_bar: float
    leader_x: float | None = None
    leader_v: float | None = None
    active: bool = False  # 本信号步 g + w
    passed: bool = False
    reaction: float | None = None  # 缺省取人工驾驶反应时间

    @property
    def has_leader(self) -> bool:
        return self.leader_x is not None


def following_term(ctx: ChvContext, p: Parameters) -> float:
    tau = p.chv_reaction if ctx.reaction is None else ctx.reaction
    gap = ctx.leader_x - ctx.x - p.vehicle_length
    return p.alpha1 * (ctx.leader_v - ctx.v) + p.alpha2 * (gap - p.same_lane_gap - tau * ctx.v)


def signal_term(ctx: ChvContext, p: Parameters) -> float:
    open_ = 1.0 if ctx.active else 0.0
    return (p.alpha1 * (open_ * p.speed_max - ctx.v)
            + p.alpha2 * ((ctx.stop_bar - ctx.x) - (1.0 - open_) * p.stopbar_gap))


def chv_accel_detail(ctx: ChvContext, p: Parameters) -> tuple[float, str]:
    """返回加速度及起作用的那一项的名称"""
    dt = p.traj_step
    upper = [(p.accel_max, "accel_max"), ((p.speed_max - ctx.v) / dt, "speed_max")]
    if ctx.has_leader:
        upper.append((following_term(ctx, p), FOLLOWING))
    if not ctx.passed:
        upper.append((signal_term(ctx, p), SIGNAL))
    m, m_name = min(upper, key=lambda item: item[0])

    lower = [(p.accel_min, "accel_min"), ((p.speed_min - ctx.v) / dt, "speed_min")]
    a, name = m, m_name
    for value, label in lower:
        if value > a:
            a, name = value, label
    return a, name


def chv_accel(ctx: ChvContext, p: Parameters) -> float:
    """跟驰模型加速度 (ft/s²)"""
    return chv_accel_detail(ctx, p)[0]


def lane_active(schedule: SignalSchedule, lane: str, step: int) -> bool:
    """信号步 step 上车道是否放行；超出方案末端时沿用最后一步"""
    step = min(step, schedule.end - 1)
    return schedule.is_active(lane, step)


def predict_chv_trajectory(t0: int, x0: float, v0: float, lane: str, schedule: SignalSchedule,
                           leader: Trajectory | None, horizon: int, params: Parameters, stop_bar: float,
                           reaction: float | None = None) -> Trajectory:
    """按跟驰模型向前滚动预测轨迹

    Args:
        t0: 起始轨迹步（绝对序号）
        x0: 当前位置 (ft)
        v0: 当前速度 (ft/s)
        lane: 所在车道
        schedule: 覆盖时域的信号方案，按包含轨迹步的信号步取灯色
        leader: 前车预测轨迹（与本车同一 t0），None 表示没有前车
        horizon: 预测步数 H
        params: 参数
        stop_bar: 停车线位置 b
        reaction: 反应时间，缺省取人工驾驶反应时间

    Returns:
        长度为 H 的预测轨迹
    """
    if leader is not None and leader.horizon < horizon:
        raise ValueError("前车轨迹时域短于预测时域")
    r = params.steps_per_signal
    x, v = x0, v0
    accels = np.empty(horizon)
    for t in range(horizon):
        ctx = ChvContext(
            x=x, v=v, stop_bar=stop_bar,
            leader_x=None if leader is None else float(leader.positions[t]),
            leader_v=None if leader is None else float(leader.speeds[t]),
            active=lane_active(schedule, lane, (t0 + t) // r),
            passed=x > stop_bar,
            reaction=reaction,
        )
        accels[t] = chv_accel(ctx, params)
        dt = params.traj_step
        x, v = x + v * dt + 0.5 * accels[t] * dt * dt, v + accels[t] * dt
    return Trajectory.from_accels(t0, x0, v0, accels, params.traj_step, stop_bar)
