#!/usr/bin/env python3
"""
运行结果评价

延误、停车次数、白灯启用率、碰撞时间 (TTC) 与驾驶舒适性统计，以及扫描实验的汇总表。
所有函数只读取 SimulationLog，不修改它。
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
import pandas as pd

from core.scene import IntersectionScene
from core.signal_rules import validate_schedule
from core.sim_log import SimulationLog
from models.scenario_schema import Parameters

STOP_SPEED = 0.5  # ft/s
STOP_DURATION = 1.0  # s
REPORT_TTC = 5.0  # 统计 TTC 分布时的上限 (s)

INDICATIONS = ("green", "white", "yellow", "red")
TTC_COLUMNS = ["step", "lane", "other_lane", "vehicle", "other", "ttc"]


def count_stops(speeds: np.ndarray, dt: float) -> int:
    """速度低于 0.5 ft/s 持续至少 1 s 记一次停车"""
    stops, run = 0, 0.0
    for v in np.asarray(speeds, dtype=float):
        if v < STOP_SPEED:
            before = run
            run += dt
            if before < STOP_DURATION <= run + 1e-9:
                stops += 1
        else:
            run = 0.0
    return stops


# ---- TTC ----

def rear_end_ttc(frame: pd.DataFrame, vehicle_length: float, threshold: float) -> pd.DataFrame:
    """同车道跟车 TTC = 净间距 / 接近速度，只记录接近且小于阈值的情形"""
    if frame.empty:
        return pd.DataFrame(columns=TTC_COLUMNS)
    df = frame.sort_values(["step", "lane", "x"], ascending=[True, True, False])
    grouped = df.groupby(["step", "lane"], sort=False)
    df = df.assign(lead_x=grouped["x"].shift(1), lead_v=grouped["v"].shift(1), lead=grouped["vehicle"].shift(1))
    df = df.dropna(subset=["lead_x"])
    closing = df["v"] - df["lead_v"]
    gap = df["lead_x"] - vehicle_length - df["x"]
    df = df.assign(ttc=gap / closing.where(closing > 0))
    df = df[(closing > 0) & (df["ttc"] < threshold)]
    return pd.DataFrame({
        "step": df["step"].astype(int), "lane": df["lane"], "other_lane": df["lane"],
        "vehicle": df["vehicle"].astype(int), "other": df["lead"].astype(int), "ttc": df["ttc"],
    }).reset_index(drop=True)


def _windows(frame: pd.DataFrame, lane: str, point: float, length: float) -> pd.DataFrame:
    """按当前速度外推的冲突点占用时间窗"""
    sub = frame[(frame["lane"] == lane) & (frame["x"] - length < point) & (frame["v"] > 0)]
    return pd.DataFrame({
        "step": sub["step"],
        "vehicle": sub["vehicle"],
        "enter": (point - sub["x"]).clip(lower=0) / sub["v"],
        "exit": (point - sub["x"] + length) / sub["v"],
    })


def crossing_ttc(frame: pd.DataFrame, scene: IntersectionScene, vehicle_length: float,
                 threshold: float) -> pd.DataFrame:
    """冲突车道 TTC：两车按当前速度到达各自冲突点，占用时间窗重叠时取较晚的进入时刻"""
    events = []
    ids = scene.lane_ids
    for lane, other in scene.pairs():
        if ids.index(lane) > ids.index(other):
            continue
        a = _windows(frame, lane, scene.conflict_point(lane, other), vehicle_length)
        b = _windows(frame, other, scene.conflict_point(other, lane), vehicle_length)
        if a.empty or b.empty:
            continue
        pairs = a.merge(b, on="step", suffixes=("", "_o"))
        overlap = (pairs["enter"] <= pairs["exit_o"]) & (pairs["enter_o"] <= pairs["exit"])
        pairs = pairs[overlap]
        ttc = np.maximum(pairs["enter"], pairs["enter_o"])
        hits = pairs[ttc < threshold]
        if hits.empty:
            continue
        events.append(pd.DataFrame({
            "step": hits["step"].astype(int), "lane": lane, "other_lane": other,
            "vehicle": hits["vehicle"].astype(int), "other": hits["vehicle_o"].astype(int),
            "ttc": ttc[ttc < threshold],
        }))
    if not events:
        return pd.DataFrame(columns=TTC_COLUMNS)
    return pd.concat(events, ignore_index=True).sort_values(["step", "lane", "vehicle"]).reset_index(drop=True)


@dataclass
class TtcEvents:
    """TTC 事件表"""
    rear_end: pd.DataFrame
    crossing: pd.DataFrame

    def near_collisions(self, threshold: float) -> tuple[int, int]:
        return int((self.rear_end["ttc"] < threshold).sum()), int((self.crossing["ttc"] < threshold).sum())

    def frame(self) -> pd.DataFrame:
        """合并为一张表，附冲突类型列"""
        parts = [f.assign(conflict=c) for c, f in (("rear_end", self.rear_end), ("crossing", self.crossing))
                 if not f.empty]
        if not parts:
            return pd.DataFrame(columns=[*TTC_COLUMNS, "conflict"])
        return pd.concat(parts, ignore_index=True)[[*TTC_COLUMNS, "conflict"]]


def compute_ttc(log: SimulationLog, scene: IntersectionScene, params: Parameters,
                threshold: float = REPORT_TTC) -> TtcEvents:
    """计算跟车与交叉冲突的 TTC 事件

    Args:
        log: 仿真日志
        scene: 交叉口场景（冲突点）
        params: 参数（车长）
        threshold: 记录阈值 (s)

    Returns:
        TtcEvents
    """
    frame = log.trajectories()
    return TtcEvents(
        rear_end=rear_end_ttc(frame, params.vehicle_length, threshold),
        crossing=crossing_ttc(frame, scene, params.vehicle_length, threshold),
    )


def ttc_summary(values: pd.Series) -> dict:
    if values.empty:
        return {"count": 0, "min": None, "q1": None, "median": None, "q3": None}
    q = values.quantile([0.25, 0.5, 0.75])
    return {"count": int(len(values)), "min": round(float(values.min()), 6), "q1": round(float(q[0.25]), 6),
            "median": round(float(q[0.5]), 6), "q3": round(float(q[0.75]), 6)}


# ---- 安全检查 ----

def _body_clearance(x: pd.Series, point: float, length: float) -> pd.Series:
    inside = (x - length <= point) & (point <= x)
    return np.minimum((x - point).abs(), (x - length - point).abs()).where(~inside, 0.0)


def safety_violations(log: SimulationLog, scene: IntersectionScene, params: Parameters) -> pd.DataFrame:
    """同车道重叠与冲突点邻域同时占用

    邻域占用：两车均已越过停车线，车身到各自冲突点的距离之和小于 ρ。
    """
    frame = log.trajectories()
    columns = ["step", "kind", "vehicle", "other", "detail"]
    rows = []
    if frame.empty:
        return pd.DataFrame(columns=columns)
    df = frame.sort_values(["step", "lane", "x"], ascending=[True, True, False])
    grouped = df.groupby(["step", "lane"], sort=False)
    df = df.assign(lead_x=grouped["x"].shift(1), lead=grouped["vehicle"].shift(1)).dropna(subset=["lead_x"])
    gap = df["lead_x"] - params.vehicle_length - df["x"]
    for step, vid, lead, g in zip(df["step"], df["vehicle"], df["lead"], gap):
        if g < 0:
            rows.append((int(step), "overlap", int(vid), int(lead), f"gap={g:.3f}"))

    b = scene.stop_bar
    ids = scene.lane_ids
    crossed = frame[frame["x"] > b]
    for lane, other in scene.pairs():
        if ids.index(lane) > ids.index(other):
            continue
        a = crossed[crossed["lane"] == lane]
        o = crossed[crossed["lane"] == other]
        if a.empty or o.empty:
            continue
        a = a.assign(c=_body_clearance(a["x"], scene.conflict_point(lane, other), params.vehicle_length))
        o = o.assign(c=_body_clearance(o["x"], scene.conflict_point(other, lane), params.vehicle_length))
        pairs = a.merge(o, on="step", suffixes=("", "_o"))
        hits = pairs[pairs["c"] + pairs["c_o"] < params.group_gap]
        for step, vid, oid, total in zip(hits["step"], hits["vehicle"], hits["vehicle_o"], hits["c"] + hits["c_o"]):
            rows.append((int(step), "crossing", int(vid), int(oid), f"{lane}/{other} clearance={total:.3f}"))
    return pd.DataFrame(rows, columns=columns)


# ---- 舒适性 ----

def _moments(values: pd.Series) -> tuple[float | None, float | None]:
    if values.empty:
        return None, None
    return round(float(values.mean()), 6), round(float(values.std(ddof=0)), 6)


def comfort_stats(log: SimulationLog) -> pd.DataFrame:
    """按车辆类型统计速度、加减速度与正负冲击度（均值与标准差，加速度与冲击度不含 0 值）"""
    frame = log.trajectories().sort_values(["vehicle", "step"])
    jerk = frame.groupby("vehicle")["a"].diff() / log.dt
    frame = frame.assign(jerk=jerk)
    rows = {}
    for kind in ("CAV", "CHV"):
        sub = frame[frame["kind"] == kind]
        stats = {}
        stats["speed_mean"], stats["speed_sd"] = _moments(sub["v"])
        stats["accel_mean"], stats["accel_sd"] = _moments(sub["a"][sub["a"] > 0])
        stats["decel_mean"], stats["decel_sd"] = _moments(sub["a"][sub["a"] < 0])
        j = sub["jerk"].dropna()
        stats["pos_jerk_mean"], stats["pos_jerk_sd"] = _moments(j[j > 0])
        stats["neg_jerk_mean"], stats["neg_jerk_sd"] = _moments(j[j < 0])
        rows[kind] = stats
    return pd.DataFrame.from_dict(rows, orient="index")


# ---- 信号 ----

def activation_rate(log: SimulationLog) -> pd.DataFrame:
    """各车道各灯色占信号步的比例"""
    signals = log.signals()
    if signals.empty:
        return pd.DataFrame(columns=list(INDICATIONS))
    counts = pd.crosstab(signals["lane"], signals["indication"], normalize="index")
    return counts.reindex(columns=list(INDICATIONS), fill_value=0.0).reindex(list(log.history.lanes))


def white_share(log: SimulationLog) -> float:
    """白灯车道步占放行（绿+白）车道步的比例"""
    green = int(log.history.bits[0].sum())
    white = int(log.history.bits[1].sum())
    return white / (green + white) if green + white else 0.0


def white_time_share(log: SimulationLog) -> float:
    """至少一条车道显示白灯的信号步占比"""
    if not log.history.steps:
        return 0.0
    return float(log.history.bits[1].any(axis=0).mean())


# ---- 汇总 ----

@dataclass
class RunMetrics:
    """一次运行的评价指标"""
    total_delay: float
    average_delay: float
    vehicles: int
    completed: int
    stops_per_vehicle: float
    white_rate: float
    white_time: float
    rear_end_ttc: dict
    crossing_ttc: dict
    near_collisions: dict
    safety_violations: int
    signal_violations: int
    comfort: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return asdict(self)


def compute_metrics(log: SimulationLog, scene: IntersectionScene, params: Parameters,
                    events: TtcEvents | None = None) -> RunMetrics:
    """汇总一次运行的全部指标，events 缺省时重新计算 TTC"""
    vehicles = log.vehicle_table()
    total = float(vehicles["delay"].sum()) if not vehicles.empty else 0.0
    count = len(vehicles)
    if events is None:
        events = compute_ttc(log, scene, params)
    rear, crossing = events.near_collisions(params.ttc_threshold)
    comfort = comfort_stats(log)
    return RunMetrics(
        total_delay=round(total, 6),
        average_delay=round(total / count, 6) if count else 0.0,
        vehicles=count,
        completed=int(vehicles["completed"].sum()) if count else 0,
        stops_per_vehicle=round(float(vehicles["stops"].mean()), 6) if count else 0.0,
        white_rate=round(white_share(log), 6),
        white_time=round(white_time_share(log), 6),
        rear_end_ttc=ttc_summary(events.rear_end["ttc"]),
        crossing_ttc=ttc_summary(events.crossing["ttc"]),
        near_collisions={"rear_end": rear, "crossing": crossing, "threshold": params.ttc_threshold},
        safety_violations=len(safety_violations(log, scene, params)),
        signal_violations=len(validate_schedule(log.history, scene, params)),
        comfort={kind: {k: float(v) for k, v in row.items() if v is not None and not pd.isna(v)}
                 for kind, row in comfort.to_dict(orient="index").items()},
    )


SUMMARY_COLUMNS = ["controller", "penetration", "seed", "total_delay", "average_delay", "stops_per_vehicle",
                   "white_rate", "white_time", "near_rear_end", "near_crossing", "safety_violations",
                   "signal_violations"]


def summary_row(controller: str, penetration: float, seed: int, metrics: RunMetrics) -> dict:
    return {
        "controller": controller, "penetration": penetration, "seed": seed,
        "total_delay": metrics.total_delay, "average_delay": metrics.average_delay,
        "stops_per_vehicle": metrics.stops_per_vehicle, "white_rate": metrics.white_rate,
        "white_time": metrics.white_time, "near_rear_end": metrics.near_collisions["rear_end"],
        "near_crossing": metrics.near_collisions["crossing"], "safety_violations": metrics.safety_violations,
        "signal_violations": metrics.signal_violations,
    }


def sweep_table(rows: list[dict]) -> pd.DataFrame:
    """扫描结果表，按控制器、渗透率、种子排序"""
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS).sort_values(["controller", "penetration", "seed"]) \
        .reset_index(drop=True)


def delay_vs_penetration(table: pd.DataFrame) -> pd.DataFrame:
    """平均延误随渗透率变化（长表，各种子取均值）"""
    return table.groupby(["controller", "penetration"], as_index=False)[["average_delay", "total_delay"]].mean()


def activation_vs_penetration(table: pd.DataFrame) -> pd.DataFrame:
    return table.groupby(["controller", "penetration"], as_index=False)[["white_rate", "white_time"]].mean()


def paired_comparison(table: pd.DataFrame, proposed: str, reference: str) -> pd.DataFrame:
    """两种控制器在同一渗透率下的总延误对比及降低比例"""
    means = table.groupby(["controller", "penetration"])["total_delay"].mean().unstack(0)
    if proposed not in means or reference not in means:
        return pd.DataFrame(columns=["penetration", proposed, reference, "reduction"])
    out = means[[proposed, reference]].dropna().reset_index()
    out["reduction"] = np.where(out[reference] > 0, 1.0 - out[proposed] / out[reference], 0.0)
    return out


def ttc_long_table(labelled: list[tuple[dict, pd.DataFrame]]) -> pd.DataFrame:
    """箱线图数据：每个 TTC 事件一行，附带单元标签与冲突类型

    Args:
        labelled: (单元标签, TtcEvents.frame() 格式的事件表) 列表
    """
    frames = [frame[["ttc", "conflict"]].assign(**labels) for labels, frame in labelled if not frame.empty]
    if not frames:
        return pd.DataFrame(columns=["ttc", "conflict", "controller", "penetration", "seed"])
    return pd.concat(frames, ignore_index=True)
