#!/usr/bin/env python3
"""
信号相位逻辑约束

所有相位规则在这里以线性不等式的形式统一生成：校验已执行的信号历史时按 0/1
取值逐条检查，构建优化模型时则把同一批不等式翻译成约束行，两处口径一致。
窗口越过方案末端时按剩余步数截断。方案开始之前的步一律视为红灯。
"""
from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass

from core.scene import IntersectionScene
from core.traffic import SignalSchedule
from models.scenario_schema import Parameters

Term = tuple[str, str, int]  # (车道, g/w/y, 信号步)

TOL = 1e-6


@dataclass(frozen=True)
class SignalRow:
    """一条相位约束：Σ coef·term (sense) rhs"""
    rule: str
    lane: str
    step: int
    terms: dict[Term, float]
    sense: str
    rhs: float

    @property
    def steps(self) -> tuple[int, int]:
        zs = [z for _, _, z in self.terms]
        return min(zs), max(zs)

    def lhs(self, value) -> float:
        return sum(coef * value(*term) for term, coef in self.terms.items())

    def satisfied(self, value) -> bool:
        lhs = self.lhs(value)
        if self.sense == "<=":
            return lhs <= self.rhs + TOL
        if self.sense == ">=":
            return lhs >= self.rhs - TOL
        return abs(lhs - self.rhs) <= TOL


@dataclass(frozen=True)
class Violation:
    """违反的相位约束及其坐标"""
    rule: str
    lane: str
    step: int
    detail: str


class _Row:
    """累加系数的小工具"""

    def __init__(self):
        self.terms: dict[Term, float] = {}

    def add(self, lane: str, kind: str, step: int, coef: float) -> _Row:
        key = (lane, kind, step)
        self.terms[key] = self.terms.get(key, 0.0) + coef
        if self.terms[key] == 0.0:
            del self.terms[key]
        return self

    def span(self, lane: str, kinds: str, first: int, last: int, coef: float = 1.0) -> _Row:
        for z in range(first, last + 1):
            for kind in kinds:
                self.add(lane, kind, z, coef)
        return self


@dataclass(frozen=True)
class StepDurations:
    """以信号步计的相位时长"""
    yellow: int
    all_red: int
    max_green: int
    min_active: dict[str, int]
    min_white: dict[str, int]

    @classmethod
    def from_params(cls, scene: IntersectionScene, params: Parameters) -> StepDurations:
        return cls(
            yellow=params.signal_steps(params.yellow),
            all_red=params.signal_steps(params.all_red),
            max_green=params.signal_steps(params.max_green),
            min_active={lane.id: params.signal_steps(params.min_active(lane.movement)) for lane in scene.lanes},
            min_white={lane.id: params.signal_steps(params.min_white(lane.movement)) for lane in scene.lanes},
        )

    @property
    def longest_window(self) -> int:
        return max(self.max_green + 1, self.yellow + 1, self.all_red + 1,
                   max(self.min_active.values(), default=1) + 1, max(self.min_white.values(), default=1) + 1)


def signal_rows(scene: IntersectionScene, params: Parameters, end: int, lo: int = 0,
                record_start: int = 0) -> Iterator[SignalRow]:
    """生成涉及信号步 [lo, end) 的全部相位约束

    Args:
        scene: 交叉口场景
        params: 参数
        end: 窗口末端（不含），越过末端的求和被截断
        lo: 只输出至少引用一个 >= lo 信号步的约束
        record_start: 记录起点，之前的步为常量 0（不会作为锚点之前的“历史”再展开）
    """
    d = StepDurations.from_params(scene, params)
    first = max(record_start - 1, lo - d.longest_window - 1)
    lanes = scene.lane_ids

    def emit(rule: str, lane: str, n: int, row: _Row, sense: str, rhs: float):
        if not row.terms:
            return None
        zs = [z for _, _, z in row.terms]
        if max(zs) < lo or max(zs) >= end:
            return None
        return SignalRow(rule, lane, n, dict(row.terms), sense, rhs)

    for n in range(first, end):
        for lane in lanes:
            conflicts = sorted(scene.conflicts(lane), key=lanes.index)
            g_min, w_min = d.min_active[lane], d.min_white[lane]
            remaining = end - 1 - n
            rows: list[SignalRow | None] = []

            # 互斥：同一步至多一种灯色
            rows.append(emit("exclusive", lane, n, _Row().span(lane, "gwy", n, n), "<=", 1.0))

            # 冲突车道不得同时出现绿-绿或绿-白
            for other in conflicts:
                row = _Row().add(lane, "g", n, 1).add(other, "g", n, 1).add(other, "w", n, 1)
                rows.append(emit("conflict", lane, n, row, "<=", 1.0))

            if remaining >= 1:
                # 转为绿灯后的最短放行时间
                span = min(g_min, remaining)
                row = _Row().span(lane, "gw", n + 1, n + span).add(lane, "g", n + 1, -span).add(lane, "g", n, span)
                rows.append(emit("min_active", lane, n, row, ">=", 0.0))

                # 由红/黄转为白灯后的最短白灯时间
                span = min(w_min, remaining)
                row = (_Row().span(lane, "w", n + 1, n + span).add(lane, "w", n + 1, -span)
                       .add(lane, "g", n, span).add(lane, "w", n, span))
                rows.append(emit("min_white", lane, n, row, ">=", 0.0))

                # 绿灯/白灯结束且未转入另一种放行灯色时必须接黄灯
                span = min(d.yellow, remaining)
                row = (_Row().span(lane, "y", n + 1, n + span).add(lane, "g", n, -span)
                       .add(lane, "g", n + 1, span).add(lane, "w", n + 1, span))
                rows.append(emit("green_to_yellow", lane, n, row, ">=", 0.0))
                row = (_Row().span(lane, "y", n + 1, n + span).add(lane, "w", n, -span)
                       .add(lane, "w", n + 1, span).add(lane, "g", n + 1, span))
                rows.append(emit("white_to_yellow", lane, n, row, ">=", 0.0))

                # 由绿灯切换为白灯后，冲突车道在全红时长内不得启动白灯
                span = min(d.all_red, remaining)
                for other in conflicts:
                    row = _Row().span(other, "w", n + 1, n + span).add(lane, "g", n, span).add(lane, "w", n + 1, span)
                    rows.append(emit("handoff", lane, n, row, "<=", 2.0 * span))

            if remaining >= d.max_green:
                rows.append(emit("max_green", lane, n, _Row().span(lane, "g", n, n + d.max_green), "<=",
                                 float(d.max_green)))
            if remaining >= d.yellow:
                rows.append(emit("max_yellow", lane, n, _Row().span(lane, "y", n, n + d.yellow), "<=",
                                 float(d.yellow)))

            # 黄灯只能接在绿灯、白灯或黄灯之后
            row = _Row().add(lane, "y", n, 1).add(lane, "g", n - 1, -1).add(lane, "w", n - 1, -1).add(lane, "y", n - 1, -1)
            rows.append(emit("yellow_source", lane, n, row, "<=", 0.0))

            # 本车道黄灯期间：冲突车道不得为绿灯，也不得新启动白灯
            for other in conflicts:
                rows.append(emit("yellow_conflict", lane, n, _Row().add(other, "g", n, 1).add(lane, "y", n, 1),
                                 "<=", 1.0))
                row = _Row().add(other, "w", n, 1).add(other, "w", n - 1, -1).add(lane, "y", n, 1)
                rows.append(emit("yellow_conflict", lane, n, row, "<=", 1.0))

            # 黄灯结束后的全红清空
            for z in range(n, min(n + d.all_red, end)):
                row = _Row().span(lane, "gw", z, z).add(lane, "y", n - 1, 1).add(lane, "y", n, -1)
                rows.append(emit("all_red", lane, n, row, "<=", 1.0))
                for other in conflicts:
                    row = _Row().add(other, "g", z, 1).add(lane, "y", n - 1, 1).add(lane, "y", n, -1)
                    rows.append(emit("all_red", lane, n, row, "<=", 1.0))
                    row = (_Row().add(other, "w", z, 1).add(other, "w", z - 1, -1)
                           .add(lane, "y", n - 1, 1).add(lane, "y", n, -1))
                    rows.append(emit("all_red", lane, n, row, "<=", 1.0))

            yield from (row for row in rows if row is not None)


def schedule_value(schedule: SignalSchedule):
    """返回按 (车道, 类型, 步) 取值的函数，方案之前为 0"""
    def value(lane: str, kind: str, step: int) -> int:
        if step < schedule.start:
            return 0
        return schedule.value(lane, kind, step)
    return value


def validate_schedule(schedule: SignalSchedule, scene: IntersectionScene, params: Parameters) -> list[Violation]:
    """检查信号方案是否满足全部相位规则

    Returns:
        违反的约束列表，空列表表示合法
    """
    value = schedule_value(schedule)
    violations = []
    for row in signal_rows(scene, params, end=schedule.end, lo=schedule.start, record_start=schedule.start):
        if not row.satisfied(value):
            violations.append(Violation(row.rule, row.lane, row.step,
                                        f"lhs={row.lhs(value):g} {row.sense} {row.rhs:g}"))
    return violations
