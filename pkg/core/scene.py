#!/usr/bin/env python3
"""
交叉口几何与交通需求

标准四路交叉口：每个进口一条直行、一条左转车道，右侧通行，车道宽 12 ft。
冲突点由车道中心线（直行为线段、左转为四分之一圆弧）的交点计算得到。
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from core.errors import ScenarioError
from core.traffic import VehicleKind
from models.scenario_schema import DemandSchema, Parameters, SceneSchema

APPROACHES = ("EB", "NB", "WB", "SB")  # 依次逆时针旋转 90°
MOVEMENTS = ("through", "left")


@dataclass(frozen=True)
class LaneSpec:
    """车道"""
    id: str
    approach: str
    movement: str
    destination: float
    path_length: float = 0.0


@dataclass(frozen=True)
class IntersectionScene:
    """交叉口场景"""
    lanes: tuple[LaneSpec, ...]
    stop_bar: float
    conflict_sets: dict[str, frozenset[str]]
    conflict_points: dict[tuple[str, str], float]
    detection_range: float

    @property
    def lane_ids(self) -> tuple[str, ...]:
        return tuple(lane.id for lane in self.lanes)

    def lane(self, lane_id: str) -> LaneSpec:
        for lane in self.lanes:
            if lane.id == lane_id:
                return lane
        raise KeyError(lane_id)

    def conflicts(self, lane_id: str) -> frozenset[str]:
        return self.conflict_sets.get(lane_id, frozenset())

    def conflict_point(self, lane_id: str, other: str) -> float:
        """沿 lane_id 轴线与 other 的冲突点位置 F"""
        return self.conflict_points[(lane_id, other)]

    def pairs(self) -> list[tuple[str, str]]:
        """所有有序冲突车道对，按车道顺序排列"""
        ids = self.lane_ids
        return [(k, o) for k in ids for o in ids if o in self.conflicts(k)]

    @property
    def extent(self) -> float:
        """场景最大纵向尺度"""
        return max(lane.destination for lane in self.lanes)


def validate_scene(scene: IntersectionScene) -> IntersectionScene:
    """校验场景不变量，违反时抛出 ScenarioError"""
    for k in scene.lane_ids:
        for other in scene.conflicts(k):
            if k not in scene.conflicts(other):
                raise ScenarioError(f"冲突关系不对称: {k} 与 {other}")
            for a, b in ((k, other), (other, k)):
                if (a, b) not in scene.conflict_points:
                    raise ScenarioError(f"缺少冲突点 F[{a},{b}]")
                if scene.conflict_points[(a, b)] <= scene.stop_bar:
                    raise ScenarioError(f"冲突点 F[{a},{b}] 必须位于停车线之后")
        lane = scene.lane(k)
        for other in scene.conflicts(k):
            if lane.destination <= scene.conflict_point(k, other):
                raise ScenarioError(f"车道 {k} 的终点必须位于所有冲突点之后")
    return scene


# ---- 几何模板 ----

@dataclass(frozen=True)
class _Segment:
    p0: np.ndarray
    p1: np.ndarray

    @property
    def length(self) -> float:
        return float(np.linalg.norm(self.p1 - self.p0))


@dataclass(frozen=True)
class _Arc:
    center: np.ndarray
    radius: float
    theta0: float
    theta1: float  # 逆时针行驶，theta1 > theta0

    @property
    def length(self) -> float:
        return self.radius * (self.theta1 - self.theta0)

    def offset(self, point: np.ndarray) -> float | None:
        """点在弧上时返回沿弧距离"""
        theta = math.atan2(point[1] - self.center[1], point[0] - self.center[0])
        span = self.theta1 - self.theta0
        d = (theta - self.theta0) % (2 * math.pi)
        if d > span + 1e-9:
            return None
        return self.radius * d


def _rotation(k: int) -> np.ndarray:
    c, s = round(math.cos(k * math.pi / 2)), round(math.sin(k * math.pi / 2))
    return np.array([[c, -s], [s, c]], dtype=float)


def _lane_path(movement: str, k: int, lane_width: float) -> _Segment | _Arc:
    """第 k 个进口（逆时针旋转 k·90°）的车道中心线"""
    half = 2.0 * lane_width
    rot = _rotation(k)
    if movement == "through":
        y = -1.5 * lane_width
        return _Segment(rot @ np.array([-half, y]), rot @ np.array([half, y]))
    center = rot @ np.array([-half, half])
    radius = half + 0.5 * lane_width
    theta0 = -math.pi / 2 + k * math.pi / 2
    return _Arc(center, radius, theta0, theta0 + math.pi / 2)


def _segment_hits(a: _Segment, b: _Segment) -> list[tuple[float, float]]:
    da, db = a.p1 - a.p0, b.p1 - b.p0
    denom = da[0] * db[1] - da[1] * db[0]
    if abs(denom) < 1e-12:
        return []
    diff = b.p0 - a.p0
    t = (diff[0] * db[1] - diff[1] * db[0]) / denom
    u = (diff[0] * da[1] - diff[1] * da[0]) / denom
    if -1e-9 <= t <= 1 + 1e-9 and -1e-9 <= u <= 1 + 1e-9:
        return [(t * a.length, u * b.length)]
    return []


def _segment_arc_hits(a: _Segment, b: _Arc) -> list[tuple[float, float]]:
    d = a.p1 - a.p0
    f = a.p0 - b.center
    qa, qb, qc = d @ d, 2 * (f @ d), f @ f - b.radius ** 2
    disc = qb * qb - 4 * qa * qc
    if disc < 0:
        return []
    hits = []
    for t in sorted({(-qb - math.sqrt(disc)) / (2 * qa), (-qb + math.sqrt(disc)) / (2 * qa)}):
        if -1e-9 <= t <= 1 + 1e-9:
            s = b.offset(a.p0 + t * d)
            if s is not None:
                hits.append((t * a.length, s))
    return hits


def _arc_hits(a: _Arc, b: _Arc) -> list[tuple[float, float]]:
    diff = b.center - a.center
    dist = float(np.linalg.norm(diff))
    if dist < 1e-12 or dist > a.radius + b.radius or dist < abs(a.radius - b.radius):
        return []
    along = (a.radius ** 2 - b.radius ** 2 + dist ** 2) / (2 * dist)
    h = math.sqrt(max(a.radius ** 2 - along ** 2, 0.0))
    base = a.center + along * diff / dist
    normal = np.array([-diff[1], diff[0]]) / dist
    hits = []
    for point in (base + h * normal, base - h * normal):
        sa, sb = a.offset(point), b.offset(point)
        if sa is not None and sb is not None:
            hits.append((sa, sb))
    return hits


def _crossings(a, b) -> list[tuple[float, float]]:
    if isinstance(a, _Segment) and isinstance(b, _Segment):
        return _segment_hits(a, b)
    if isinstance(a, _Segment):
        return _segment_arc_hits(a, b)
    if isinstance(b, _Segment):
        return [(sa, sb) for sb, sa in _segment_arc_hits(b, a)]
    return _arc_hits(a, b)


def standard_four_leg(lane_count_per_approach: int = 1, stop_bar: float = 650.0, detection_range: float = 650.0,
                      lane_width: float = 12.0, exit_length: float = 200.0) -> IntersectionScene:
    """生成标准四路交叉口（8 条车道）

    Args:
        lane_count_per_approach: 每个转向的车道数，目前只支持 1
        stop_bar: 停车线位置 b (ft)
        detection_range: 检测范围 (ft)
        lane_width: 车道宽度 (ft)
        exit_length: 驶出交叉口后到终点的距离 (ft)

    Returns:
        交叉口场景
    """
    if lane_count_per_approach != 1:
        raise ScenarioError(f"不支持的布局: 每个转向 {lane_count_per_approach} 条车道")

    paths = {}
    lanes = []
    for k, approach in enumerate(APPROACHES):
        for movement in MOVEMENTS:
            lane_id = f"{approach}_{'T' if movement == 'through' else 'L'}"
            path = _lane_path(movement, k, lane_width)
            paths[lane_id] = path
            lanes.append(LaneSpec(lane_id, approach, movement, round(stop_bar + path.length + exit_length, 2),
                                  round(path.length, 2)))

    points: dict[tuple[str, str], float] = {}
    sets: dict[str, set[str]] = {lane.id: set() for lane in lanes}
    ids = [lane.id for lane in lanes]
    for i, a in enumerate(ids):
        for b in ids[i + 1:]:
            hits = _crossings(paths[a], paths[b])
            if not hits:
                continue
            sa, sb = min(hits)
            points[(a, b)] = round(stop_bar + sa, 2)
            points[(b, a)] = round(stop_bar + sb, 2)
            sets[a].add(b)
            sets[b].add(a)

    scene = IntersectionScene(
        lanes=tuple(lanes),
        stop_bar=stop_bar,
        conflict_sets={k: frozenset(v) for k, v in sets.items()},
        conflict_points=points,
        detection_range=detection_range,
    )
    return validate_scene(scene)


def build_scene(schema: SceneSchema) -> IntersectionScene:
    """由场景文件中的几何部分构建场景"""
    if schema.layout == "standard_four_leg":
        scene = standard_four_leg(schema.lanes_per_movement, schema.stop_bar, schema.detection_range,
                                  schema.lane_width, schema.exit_length)
        points = dict(scene.conflict_points)
        sets = {k: set(v) for k, v in scene.conflict_sets.items()}
        lanes = scene.lanes
    else:
        lanes = tuple(LaneSpec(s.id, s.approach, s.movement, s.destination) for s in schema.lanes)
        points, sets = {}, {lane.id: set() for lane in lanes}

    known = {lane.id for lane in lanes}
    for c in schema.conflicts:
        if c.lane not in known or c.other not in known:
            raise ScenarioError(f"冲突点引用了未知车道: {c.lane}/{c.other}")
        points[(c.lane, c.other)] = c.position
        points[(c.other, c.lane)] = c.other_position
        sets[c.lane].add(c.other)
        sets[c.other].add(c.lane)

    return validate_scene(IntersectionScene(
        lanes=lanes,
        stop_bar=schema.stop_bar,
        conflict_sets={k: frozenset(v) for k, v in sets.items()},
        conflict_points=points,
        detection_range=schema.detection_range,
    ))


# ---- 到达生成 ----

@dataclass(frozen=True)
class Arrival:
    """一次车辆到达"""
    vehicle_id: int
    time: float
    lane: str
    kind: VehicleKind


def generate_arrivals(scene: IntersectionScene, demand: DemandSchema, params: Parameters) -> list[Arrival]:
    """按泊松过程生成到达序列，按渗透率独立抽样车辆类型

    每条车道使用独立的随机流；类型抽样与到达时刻使用不同的子流，
    因此改变渗透率不会改变到达时刻。
    """
    raw: list[tuple[float, int, str, VehicleKind]] = []
    for index, lane in enumerate(scene.lanes):
        rate = demand.lane_rate(lane.id, lane.movement) / 3600.0
        if rate <= 0:
            continue
        times_rng = np.random.default_rng([demand.seed, index, 0])
        kind_rng = np.random.default_rng([demand.seed, index, 1])
        t = 0.0
        while True:
            t += float(times_rng.exponential(1.0 / rate))
            if t >= params.study_period:
                break
            kind = VehicleKind.CAV if kind_rng.random() < demand.penetration else VehicleKind.CHV
            raw.append((t, index, lane.id, kind))
    raw.sort(key=lambda item: (item[0], item[1]))
    return [Arrival(i, t, lane, kind) for i, (t, _, lane, kind) in enumerate(raw)]
