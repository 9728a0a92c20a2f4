#!/usr/bin/env python3
"""
信号方案规划器

在已执行的信号历史之后，按规则逐步生成合法方案：结束冲突的放行相位（满足最短时长后
转黄灯、全红），再在允许时启动目标车道的绿灯或白灯。生成结果全部经相位规则复核，
不合法的方案直接丢弃。用于投票模型的候选方案、失败时的方案延续以及定时控制。
"""
from __future__ import annotations

from collections.abc import Iterable, Mapping

from core.errors import WhitePhaseError
from core.logger import get_logger
from core.scene import IntersectionScene
from core.signal_rules import StepDurations, schedule_value, signal_rows
from core.traffic import Indication, SignalSchedule
from models.scenario_schema import Parameters

logger = get_logger(__name__)

ACTIVE = (Indication.GREEN, Indication.WHITE)


class SignalPlanner:
    """基于规则的合法信号方案生成器"""

    def __init__(self, scene: IntersectionScene, params: Parameters):
        self.scene = scene
        self.params = params
        self.lanes = scene.lane_ids
        self.d = StepDurations.from_params(scene, params)

    # ---- 记录查询 ----

    def _ind(self, record: list[dict[str, Indication]], base: int, lane: str, n: int) -> Indication:
        k = n - base
        if k < 0:
            return Indication.RED
        return record[k][lane]

    def _run(self, record, base, lane, n, kinds) -> int:
        """截至第 n 步（含）连续处于 kinds 的步数"""
        count = 0
        while n - count >= base and self._ind(record, base, lane, n - count) in kinds:
            count += 1
        return count

    def _red_since_yellow(self, record, base, lane, n) -> int | None:
        """截至第 n 步连续红灯步数；若这段红灯之前不是黄灯则返回 None"""
        red = self._run(record, base, lane, n, (Indication.RED,))
        before = n - red
        if before < base or self._ind(record, base, lane, before) is not Indication.YELLOW:
            return None
        return red

    def _can_terminate(self, record, base, lane, n) -> bool:
        """检查车道在第 n 步结束放行是否满足最短时长"""
        last = n - 1
        active = self._run(record, base, lane, last, ACTIVE)
        start = last - active + 1
        for s in range(start, n):
            ind = self._ind(record, base, lane, s)
            prev = self._ind(record, base, lane, s - 1)
            if ind is Indication.GREEN and prev is not Indication.GREEN and n - s < self.d.min_active[lane]:
                return False
            if ind is Indication.WHITE and prev not in ACTIVE and n - s < self.d.min_white[lane]:
                return False
        return True

    def _can_activate(self, record, base, lane, n, target: Indication, decided: dict[str, Indication]) -> bool:
        since = self._red_since_yellow(record, base, lane, n - 1)
        if since is not None and since < self.d.all_red:
            return False
        for other in self.scene.conflicts(lane):
            ind = decided[other]
            if target is Indication.GREEN and ind in (Indication.GREEN, Indication.WHITE, Indication.YELLOW):
                return False
            if target is Indication.WHITE and ind in (Indication.GREEN, Indication.YELLOW):
                return False
            since = self._red_since_yellow(record, base, other, n - 1)
            if since is not None and since < self.d.all_red:
                return False
            if target is Indication.WHITE:
                # 冲突车道由绿灯切换为白灯后的清空期
                white = self._run(record, base, other, n - 1, (Indication.WHITE,))
                if ind is Indication.WHITE and self._ind(record, base, other, n - 1) is Indication.GREEN:
                    return False
                if white and self._ind(record, base, other, n - 1 - white) is Indication.GREEN \
                        and white < self.d.all_red:
                    return False
        return True

    def _compatible(self, lane: str, current: Indication, targets: Mapping[str, Indication]) -> bool:
        for t, ind in targets.items():
            if t == lane or t not in self.scene.conflicts(lane):
                continue
            if current is Indication.GREEN or ind is Indication.GREEN:
                return False
        return True

    # ---- 规划 ----

    def plan(self, history: SignalSchedule, steps: int, targets: Mapping[str, Indication] | None = None,
             prefix: SignalSchedule | None = None, white_start_ok: Iterable[str] | None = None,
             white_keep_ok: Iterable[str] | None = None, exclusive: bool = False) -> SignalSchedule | None:
        """从历史末端开始生成 steps 步方案

        Args:
            history: 已执行的信号历史，方案从 history.end 开始
            steps: 生成的信号步数
            targets: 希望放行的车道及灯色，None 表示保持当前放行车道
            prefix: 直接沿用的前若干步（例如上一轮方案平移后的部分）
            white_start_ok: 允许启动白灯的车道，None 表示全部允许
            white_keep_ok: 允许保持白灯的车道，None 表示全部允许
            exclusive: 为 True 时不在 targets 中的放行车道一律尽快结束

        Returns:
            合法方案，规则复核失败时返回 None
        """
        base = history.start
        start = history.end
        record: list[dict[str, Indication]] = history.rows()
        start_ok = set(self.lanes if white_start_ok is None else white_start_ok)
        keep_ok = set(self.lanes if white_keep_ok is None else white_keep_ok)

        if targets is None:
            targets = {lane: self._ind(record, base, lane, start - 1) for lane in self.lanes
                       if self._ind(record, base, lane, start - 1) in ACTIVE}
        targets = {lane: ind for lane, ind in targets.items()
                   if ind is not Indication.WHITE or lane in start_ok or
                   self._ind(record, base, lane, start - 1) is Indication.WHITE}

        for n in range(start, start + steps):
            if prefix is not None and prefix.start <= n < prefix.end:
                record.append({lane: prefix.indication(lane, n) for lane in self.lanes})
                continue
            record.append(self._decide(record, base, n, targets, start_ok, keep_ok, exclusive))

        schedule = SignalSchedule.from_indications(self.lanes, start, record[start - base:])
        if not self.is_legal(history, schedule):
            return None
        return schedule

    def _decide(self, record, base, n, targets, start_ok, keep_ok, exclusive=False) -> dict[str, Indication]:
        d = self.d
        decided: dict[str, Indication] = {}
        for lane in self.lanes:
            cur = self._ind(record, base, lane, n - 1)
            want = targets.get(lane)
            if cur is Indication.YELLOW:
                decided[lane] = (Indication.YELLOW if self._run(record, base, lane, n - 1, (Indication.YELLOW,)) < d.yellow
                                 else Indication.RED)
                continue
            if cur is Indication.RED:
                decided[lane] = Indication.RED
                continue
            keep = want is not None or (not exclusive and self._compatible(lane, cur, targets))
            nxt = cur
            if cur is Indication.GREEN and want is Indication.WHITE and lane in start_ok:
                nxt = Indication.WHITE
            if cur is Indication.WHITE and lane not in keep_ok:
                keep = False
            if nxt is Indication.GREEN and self._run(record, base, lane, n - 1, (Indication.GREEN,)) >= d.max_green:
                keep = False
            if keep:
                decided[lane] = nxt
            elif self._can_terminate(record, base, lane, n):
                decided[lane] = Indication.YELLOW
            else:
                decided[lane] = cur

        for lane in self.lanes:
            want = targets.get(lane)
            if want is None or decided[lane] is not Indication.RED:
                continue
            if self._ind(record, base, lane, n - 1) is not Indication.RED:
                continue
            if want is Indication.WHITE and lane not in start_ok:
                continue
            if self._can_activate(record, base, lane, n, want, decided):
                decided[lane] = want
        return decided

    def is_legal(self, history: SignalSchedule, schedule: SignalSchedule) -> bool:
        """以相位规则复核历史 + 新方案"""
        combined = history.concat(schedule) if history.steps else schedule
        value = schedule_value(combined)
        for row in signal_rows(self.scene, self.params, end=combined.end, lo=schedule.start,
                               record_start=combined.start):
            if not row.satisfied(value):
                logger.debug(f"候选方案违反 {row.rule} (车道 {row.lane}, 步 {row.step})")
                return False
        return True

    def extend(self, history: SignalSchedule, plan: SignalSchedule | None, steps: int,
               white_keep_ok: Iterable[str] | None = None) -> SignalSchedule:
        """沿用已有方案并合法地补齐到 steps 步；无法沿用时从历史保持当前放行"""
        if plan is not None and plan.end > history.end and plan.start <= history.end:
            prefix = plan.window(history.end, min(plan.end, history.end + steps))
            extended = self.plan(history, steps, prefix=prefix, white_keep_ok=white_keep_ok,
                                 white_start_ok=())
            if extended is not None:
                return extended
        held = self.plan(history, steps, white_keep_ok=white_keep_ok, white_start_ok=())
        if held is not None:
            return held
        # 保持失败时全部收尾
        terminated = self.plan(history, steps, targets={}, white_start_ok=(), exclusive=True)
        if terminated is None:
            raise WhitePhaseError("无法从当前信号历史生成合法延续方案")
        return terminated

    def candidates(self, history: SignalSchedule, steps: int, focus_lanes: Iterable[str],
                   seeds: Iterable[SignalSchedule] = (), allow_white: bool = True,
                   white_start_ok: Iterable[str] | None = None, white_keep_ok: Iterable[str] | None = None,
                   limit: int | None = None) -> list[SignalSchedule]:
        """候选信号方案：保持、各聚焦车道绿灯/白灯、全部白灯以及给定的种子方案"""
        start_ok = set(self.lanes if white_start_ok is None else white_start_ok)
        if not allow_white:
            start_ok = set()
        out: list[SignalSchedule] = []

        def push(schedule: SignalSchedule | None):
            if schedule is None or any(schedule.same_as(c) for c in out):
                return
            if not allow_white and schedule.bits[1].any():
                return
            out.append(schedule)

        for seed in seeds:
            if seed.start == history.end and seed.steps == steps and self.is_legal(history, seed):
                push(seed)
            else:
                push(self.extend(history, seed, steps, white_keep_ok=white_keep_ok))
        push(self.plan(history, steps, white_start_ok=start_ok, white_keep_ok=white_keep_ok))
        for lane in focus_lanes:
            push(self.plan(history, steps, {lane: Indication.GREEN}, white_start_ok=start_ok,
                           white_keep_ok=white_keep_ok))
            if lane in start_ok:
                push(self.plan(history, steps, {lane: Indication.WHITE}, white_start_ok=start_ok,
                               white_keep_ok=white_keep_ok))
        if start_ok:
            push(self.plan(history, steps, {lane: Indication.WHITE for lane in self.lanes if lane in start_ok},
                           white_start_ok=start_ok, white_keep_ok=white_keep_ok))
        return out[:limit] if limit else out
