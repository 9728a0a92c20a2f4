#!/usr/bin/env python3
"""
交通状态核心模块：车辆、轨迹、车队与信号方案
"""
from __future__ import annotations

from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from enum import Enum

import numpy as np


class VehicleKind(Enum):
    """车辆类型"""
    CAV = "CAV"  # 网联自动驾驶
    CHV = "CHV"  # 网联人工驾驶


class Indication(Enum):
    """信号灯色"""
    GREEN = "green"
    WHITE = "white"
    YELLOW = "yellow"
    RED = "red"


@dataclass
class Vehicle:
    """仿真中的一辆车

    位置沿所在车道轴线度量，车道起点为检测区入口。
    """
    id: int
    lane: str
    kind: VehicleKind
    arrival_time: float
    x: float = 0.0
    v: float = 0.0
    accel: float = 0.0
    delay: float = 0.0
    entry_time: float | None = None
    exit_time: float | None = None
    stops: int = 0
    stopped_for: float = 0.0

    @property
    def is_cav(self) -> bool:
        return self.kind is VehicleKind.CAV

    @property
    def state(self) -> VehicleState:
        return VehicleState(self.x, self.v)


@dataclass(frozen=True)
class VehicleState:
    """位置与速度"""
    x: float
    v: float


def step_kinematics(state: VehicleState, accel: float, dt: float) -> VehicleState:
    """按离散运动方程推进一步（不做速度截断）

    Args:
        state: 当前状态
        accel: 本步加速度 (ft/s²)
        dt: 步长 (s)

    Returns:
        下一步状态
    """
    return VehicleState(
        x=state.x + state.v * dt + 0.5 * accel * dt * dt,
        v=state.v + accel * dt,
    )


@dataclass(frozen=True)
class Trajectory:
    """规划时域内的轨迹

    positions/speeds/passed 长度为 H+1（含当前状态），accels 长度为 H。
    """
    t0: int
    positions: np.ndarray
    speeds: np.ndarray
    accels: np.ndarray
    passed: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.accels)

    @classmethod
    def from_accels(cls, t0: int, x0: float, v0: float, accels: Sequence[float], dt: float,
                    stop_bar: float) -> Trajectory:
        """由加速度序列积分得到轨迹"""
        accels = np.asarray(accels, dtype=float)
        h = len(accels)
        x = np.empty(h + 1)
        v = np.empty(h + 1)
        x[0], v[0] = x0, v0
        for t in range(h):
            x[t + 1] = x[t] + v[t] * dt + 0.5 * accels[t] * dt * dt
            v[t + 1] = v[t] + accels[t] * dt
        return cls(t0, x, v, accels.copy(), passed_flags(x, stop_bar))

    @classmethod
    def from_positions(cls, t0: int, x0: float, v0: float, positions: Sequence[float], dt: float,
                       stop_bar: float) -> Trajectory:
        """由位置序列反推加速度与速度，保持运动学一致

        positions 不含当前位置，长度为 H。
        """
        positions = np.asarray(positions, dtype=float)
        accels = np.empty(len(positions))
        x, v = x0, v0
        for t, nxt in enumerate(positions):
            accels[t] = 2.0 * (nxt - x - v * dt) / (dt * dt)
            v = v + accels[t] * dt
            x = nxt
        return cls.from_accels(t0, x0, v0, accels, dt, stop_bar)

    def max_delta(self, other: Trajectory) -> float:
        """两条轨迹逐步位置差的最大值"""
        if self.horizon != other.horizon:
            raise ValueError("轨迹时域长度不一致")
        return float(np.max(np.abs(self.positions - other.positions)))

    def shifted(self, dt: float, stop_bar: float, steps: int = 1) -> Trajectory:
        """向后平移若干步，末尾以匀速补齐"""
        accels = np.concatenate([self.accels[steps:], np.zeros(steps)])
        return Trajectory.from_accels(self.t0 + steps, float(self.positions[steps]), float(self.speeds[steps]),
                                      accels, dt, stop_bar)

    def passage_step(self) -> int | None:
        """首次越过停车线的步序号"""
        idx = np.flatnonzero(self.passed)
        return int(idx[0]) if len(idx) else None


def passed_flags(positions: np.ndarray, stop_bar: float) -> np.ndarray:
    """γ_t = 1 当且仅当 x_t > b"""
    return (np.asarray(positions) > stop_bar).astype(np.int8)


def cruise_trajectory(t0: int, x0: float, v0: float, horizon: int, dt: float, stop_bar: float) -> Trajectory:
    """匀速外推轨迹"""
    return Trajectory.from_accels(t0, x0, v0, np.zeros(horizon), dt, stop_bar)


@dataclass(frozen=True)
class VehicleGroup:
    """由一辆 CAV 领航、若干 CHV 跟随的车队"""
    lane: str
    leader: int
    members: tuple[int, ...]

    @property
    def last(self) -> int:
        return self.members[-1]

    def is_member(self, vehicle_id: int) -> bool:
        return vehicle_id in self.members

    def head_tail(self, trajectories: dict[int, Trajectory], vehicle_length: float) -> tuple[np.ndarray, np.ndarray]:
        """逐步的车队头部与尾部位置 (h, e)"""
        head = trajectories[self.leader].positions
        tail = trajectories[self.last].positions - vehicle_length
        return head, tail

    def length(self, positions: dict[int, float], vehicle_length: float) -> float:
        return positions[self.leader] - (positions[self.last] - vehicle_length)


def form_groups(vehicles: Sequence[Vehicle], max_length: float, vehicle_length: float) -> list[VehicleGroup]:
    """按当前快照组建车队

    vehicles 须按位置从前到后排列。车队从每辆 CAV 开始，向后吸收 CHV，
    直到遇到下一辆 CAV 或长度将超过上限；第一辆 CAV 之前的 CHV 不属于任何车队。
    """
    groups: list[VehicleGroup] = []
    leader: Vehicle | None = None
    members: list[int] = []
    closed = True

    def flush():
        if leader is not None:
            groups.append(VehicleGroup(leader.lane, leader.id, tuple(members)))

    for vehicle in vehicles:
        if vehicle.is_cav:
            flush()
            leader, members, closed = vehicle, [vehicle.id], False
            continue
        if closed or leader is None:
            continue
        if leader.x - (vehicle.x - vehicle_length) <= max_length + 1e-9:
            members.append(vehicle.id)
        else:
            closed = True
    flush()
    return groups


_KIND_INDEX = {"g": 0, "w": 1, "y": 2}


@dataclass
class SignalSchedule:
    """逐车道、逐信号步的灯色方案

    以 g/w/y 三个 0-1 数组编码，全为 0 表示红灯。start 为首个信号步的绝对序号；
    start 之前的步按全红处理。
    """
    lanes: tuple[str, ...]
    start: int
    bits: np.ndarray = field(repr=False)  # shape (3, L, K)

    @classmethod
    def all_red(cls, lanes: Iterable[str], start: int, steps: int) -> SignalSchedule:
        lanes = tuple(lanes)
        return cls(lanes, start, np.zeros((3, len(lanes), steps), dtype=np.int8))

    @classmethod
    def from_indications(cls, lanes: Iterable[str], start: int,
                         rows: Sequence[dict[str, Indication]]) -> SignalSchedule:
        """由逐步的 {车道: 灯色} 列表构造"""
        schedule = cls.all_red(lanes, start, len(rows))
        for k, row in enumerate(rows):
            for lane, indication in row.items():
                schedule.set(lane, start + k, indication)
        return schedule

    @property
    def steps(self) -> int:
        return self.bits.shape[2]

    @property
    def end(self) -> int:
        """最后一步之后的绝对序号"""
        return self.start + self.steps

    def lane_index(self, lane: str) -> int:
        return self.lanes.index(lane)

    def value(self, lane: str, kind: str, step: int) -> int:
        """取 g/w/y 的值；方案范围之前按红灯处理"""
        k = step - self.start
        if k < 0:
            return 0
        if k >= self.steps:
            raise IndexError(f"信号步 {step} 超出方案范围")
        return int(self.bits[_KIND_INDEX[kind], self.lane_index(lane), k])

    def indication(self, lane: str, step: int) -> Indication:
        if self.value(lane, "g", step):
            return Indication.GREEN
        if self.value(lane, "w", step):
            return Indication.WHITE
        if self.value(lane, "y", step):
            return Indication.YELLOW
        return Indication.RED

    def set(self, lane: str, step: int, indication: Indication):
        k = step - self.start
        li = self.lane_index(lane)
        self.bits[:, li, k] = 0
        if indication is Indication.GREEN:
            self.bits[0, li, k] = 1
        elif indication is Indication.WHITE:
            self.bits[1, li, k] = 1
        elif indication is Indication.YELLOW:
            self.bits[2, li, k] = 1

    def is_active(self, lane: str, step: int) -> bool:
        """绿灯或白灯"""
        return bool(self.value(lane, "g", step) or self.value(lane, "w", step))

    def window(self, start: int, end: int) -> SignalSchedule:
        """截取 [start, end) 的子方案"""
        a, b = start - self.start, end - self.start
        if a < 0 or b > self.steps:
            raise IndexError("截取范围超出方案")
        return SignalSchedule(self.lanes, start, self.bits[:, :, a:b].copy())

    def extended(self, steps: int) -> SignalSchedule:
        """末尾按最后一步保持补齐（不保证合法性）"""
        if steps <= 0:
            return self.copy()
        tail = np.repeat(self.bits[:, :, -1:], steps, axis=2)
        return SignalSchedule(self.lanes, self.start, np.concatenate([self.bits, tail], axis=2))

    def concat(self, other: SignalSchedule) -> SignalSchedule:
        if other.start != self.end or other.lanes != self.lanes:
            raise ValueError("方案不连续")
        return SignalSchedule(self.lanes, self.start, np.concatenate([self.bits, other.bits], axis=2))

    def copy(self) -> SignalSchedule:
        return SignalSchedule(self.lanes, self.start, self.bits.copy())

    def same_as(self, other: SignalSchedule) -> bool:
        return (self.lanes == other.lanes and self.start == other.start
                and np.array_equal(self.bits, other.bits))

    def rows(self) -> list[dict[str, Indication]]:
        return [{lane: self.indication(lane, n) for lane in self.lanes} for n in range(self.start, self.end)]
