#!/usr/bin/env python3
"""
基准信号控制

- ActuatedController：双环八相位感应控制，按间隔时间 (gap-out) 或最长绿灯 (max-out) 结束相位，
  两个环在屏障处同步，没有冲突请求时保持当前绿灯
- FixedTimeController：四相位定时控制（每条道路先左转、后直行）

两者都只决定“希望放行哪些车道”，实际灯色由 SignalPlanner 按相位规则生成（黄灯、全红、
最短时长、冲突车道），因此输出总是合法的。
"""
from __future__ import annotations

from collections.abc import Iterable
from dataclasses import dataclass, field

from core.logger import get_logger
from core.scene import IntersectionScene
from core.signal_planner import SignalPlanner
from core.traffic import Indication, SignalSchedule
from models.experiment_schema import FIXED_TIME_PHASES, BaselineConfig
from models.scenario_schema import Parameters

logger = get_logger(__name__)

# (进口, 转向)；环 1 为 φ1-φ4，环 2 为 φ5-φ8，每个环前两个相位位于屏障左侧
RING_1 = (("WB", "left"), ("EB", "through"), ("SB", "left"), ("NB", "through"))
RING_2 = (("EB", "left"), ("WB", "through"), ("NB", "left"), ("SB", "through"))
BARRIER = 2

STREETS = {"EB": "EW", "WB": "EW", "NB": "NS", "SB": "NS"}


@dataclass(frozen=True)
class DetectorState:
    """车道检测器状态"""
    presence: bool = False  # 检测区内有未通过停车线的车辆
    call: bool = False  # 进口道上有未通过停车线的车辆


@dataclass
class RingState:
    """单个环的相位状态"""
    phase: int | None = None  # 当前相位在环内的序号
    green_steps: int = 0
    gap_steps: int = 0


@dataclass
class ActuatedState:
    """感应控制状态"""
    rings: list[RingState] = field(default_factory=lambda: [RingState(), RingState()])
    group: int = 0  # 屏障分组：0 为 φ1/2/5/6，1 为 φ3/4/7/8


def phase_lanes(scene: IntersectionScene, ring: tuple[tuple[str, str], ...]) -> list[list[str]]:
    """环内各相位对应的车道"""
    return [[lane.id for lane in scene.lanes if lane.approach == approach and lane.movement == movement]
            for approach, movement in ring]


class ActuatedController:
    """双环感应控制"""

    def __init__(self, scene: IntersectionScene, params: Parameters, config: BaselineConfig,
                 planner: SignalPlanner | None = None):
        self.scene = scene
        self.params = params
        self.config = config
        self.planner = planner or SignalPlanner(scene, params)
        self.rings = [phase_lanes(scene, RING_1), phase_lanes(scene, RING_2)]
        self.state = ActuatedState()
        self.gap_steps = max(1, params.signal_steps(config.gap_out))
        self.max_steps = params.signal_steps(config.max_green)
        placed = {lane for ring in self.rings for lanes in ring for lane in lanes}
        missing = [lane for lane in scene.lane_ids if lane not in placed]
        if missing:
            logger.warning(f"以下车道不属于任何感应相位，将保持红灯: {missing}")

    def _min_steps(self, lanes: list[str]) -> int:
        need = max(self.params.min_active(self.scene.lane(lane).movement) for lane in lanes)
        if self.config.min_green is not None:
            need = max(need, self.config.min_green)
        return self.params.signal_steps(need)

    def _has_call(self, ring: int, phase: int, detectors: dict[str, DetectorState]) -> bool:
        return any(detectors.get(lane, DetectorState()).call for lane in self.rings[ring][phase])

    def _group_phases(self, group: int) -> range:
        return range(0, BARRIER) if group == 0 else range(BARRIER, len(RING_1))

    def _conflicting_call(self, ring: int, phase: int, detectors: dict[str, DetectorState]) -> bool:
        """其他相位有请求；同时计时的相位只有与本相位车道冲突时才算"""
        mine = self.rings[ring][phase]
        for r in range(2):
            for k in range(len(self.rings[r])):
                if (r, k) == (ring, phase):
                    continue
                if self._is_timing(r, k) and not any(other in self.scene.conflicts(lane)
                                                     for lane in mine for other in self.rings[r][k]):
                    continue
                if self._has_call(r, k, detectors):
                    return True
        return False

    def _is_timing(self, ring: int, phase: int) -> bool:
        return self.state.rings[ring].phase == phase

    def _next_in_group(self, ring: int, after: int | None, group: int,
                       detectors: dict[str, DetectorState]) -> int | None:
        phases = list(self._group_phases(group))
        start = 0 if after is None or after not in phases else phases.index(after) + 1
        for k in phases[start:]:
            if self.rings[ring][k] and self._has_call(ring, k, detectors):
                return k
        return None

    def step(self, history: SignalSchedule, detectors: dict[str, DetectorState]) -> SignalSchedule:
        """给出下一信号步（history.end）的灯色"""
        n = history.end
        st = self.state
        for r, ring in enumerate(st.rings):
            if ring.phase is None:
                continue
            lanes = self.rings[r][ring.phase]
            shown = history.steps and all(history.indication(lane, n - 1) is Indication.GREEN for lane in lanes)
            if shown:
                ring.green_steps += 1
            ring.gap_steps = 0 if any(detectors.get(lane, DetectorState()).presence for lane in lanes) \
                else ring.gap_steps + 1
            if ring.green_steps >= self._min_steps(lanes) and self._conflicting_call(r, ring.phase, detectors):
                if ring.gap_steps >= self.gap_steps or ring.green_steps >= self.max_steps:
                    reason = "gap-out" if ring.gap_steps >= self.gap_steps else "max-out"
                    logger.debug(f"步 {n}: 相位 {self._label(r, ring.phase)} {reason}")
                    finished = ring.phase
                    ring.phase, ring.green_steps, ring.gap_steps = None, 0, 0
                    ring.phase = self._next_in_group(r, finished, st.group, detectors)

        # 两个环都到达屏障时换组
        if all(ring.phase is None for ring in st.rings):
            for group in (1 - st.group, st.group):
                picks = [self._next_in_group(r, None, group, detectors) for r in range(2)]
                if any(p is not None for p in picks):
                    st.group = group
                    for ring, pick in zip(st.rings, picks):
                        ring.phase = pick
                    break

        targets = {lane: Indication.GREEN for r, ring in enumerate(st.rings) if ring.phase is not None
                   for lane in self.rings[r][ring.phase]}
        planned = self.planner.plan(history, 1, targets, white_start_ok=(), exclusive=True)
        if planned is None:
            planned = self.planner.extend(history, None, 1, white_keep_ok=())
        return planned

    def _label(self, ring: int, phase: int) -> str:
        return f"φ{phase + 1 + 4 * ring}"


def actuated_baseline_step(controller: ActuatedController, history: SignalSchedule,
                           detectors: dict[str, DetectorState]) -> dict[str, Indication]:
    """感应控制单步：返回各车道灯色"""
    planned = controller.step(history, detectors)
    return {lane: planned.indication(lane, planned.start) for lane in controller.scene.lane_ids}


class FixedTimeController:
    """四相位定时控制，相位时长含黄灯与全红"""

    def __init__(self, scene: IntersectionScene, params: Parameters, config: BaselineConfig,
                 planner: SignalPlanner | None = None):
        self.scene = scene
        self.params = params
        self.planner = planner or SignalPlanner(scene, params)
        clearance = params.yellow + params.all_red
        self.phases: list[tuple[list[str], int, int]] = []  # (车道, 绿灯步数, 相位总步数)
        for name in FIXED_TIME_PHASES:
            street, movement = name.split("_")
            lanes = [lane.id for lane in scene.lanes if STREETS.get(lane.approach) == street
                     and lane.movement == movement]
            if not lanes:
                continue
            split = config.splits[name]
            minimum = params.min_active(movement)
            green = max(split - clearance, minimum)
            if green > split - clearance:
                logger.warning(f"定时相位 {name} 的时长 {split}s 不足，绿灯按最短放行时间 {minimum}s 计")
            self.phases.append((lanes, params.signal_steps(green), params.signal_steps(green + clearance)))
        self.cycle_steps = sum(total for _, _, total in self.phases)

    def targets(self, n: int) -> dict[str, Indication]:
        """第 n 信号步希望放行的车道"""
        if not self.phases:
            return {}
        c = n % self.cycle_steps
        for lanes, green, total in self.phases:
            if c < total:
                return {lane: Indication.GREEN for lane in lanes} if c < green else {}
            c -= total
        return {}

    def step(self, history: SignalSchedule, detectors: Iterable | None = None) -> SignalSchedule:
        planned = self.planner.plan(history, 1, self.targets(history.end), white_start_ok=(), exclusive=True)
        if planned is None:
            planned = self.planner.extend(history, None, 1, white_keep_ok=())
        return planned
