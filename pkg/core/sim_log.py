#!/usr/bin/env python3
"""
仿真日志与结果文件

一次运行的全部记录集中在 SimulationLog 中，写出为：
trajectories.csv / signals.csv / vehicles.csv / iterations.csv / metadata.yaml，
以及单独的 timing.csv（墙钟时间，重复运行时不要求一致）。
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import pandas as pd
import yaml

from core.logger import get_logger
from core.traffic import SignalSchedule, Vehicle

logger = get_logger(__name__)

TRAJECTORY_COLUMNS = ["step", "time", "vehicle", "lane", "kind", "x", "v", "a"]
SIGNAL_COLUMNS = ["step", "lane", "indication"]
VEHICLE_COLUMNS = ["vehicle", "lane", "kind", "arrival", "entry", "exit", "delay", "stops", "completed"]
ITERATION_COLUMNS = ["step", "iteration", "max_delta", "votes_stable", "schedule_fixed", "infeasible"]
TIMING_COLUMNS = ["step", "mode", "wall_time", "iterations", "converged", "fallback"]


@dataclass
class ControlStepRecord:
    """一个控制步的执行记录"""
    step: int
    mode: str
    wall_time: float
    accels: dict[int, float] = field(default_factory=dict)
    indications: dict[str, str] = field(default_factory=dict)
    iterations: int = 0
    converged: bool = True
    fallback: bool = False


@dataclass
class SimulationLog:
    """一次运行的完整记录"""
    metadata: dict
    history: SignalSchedule
    trajectory_rows: list[tuple] = field(default_factory=list)
    vehicles: list[Vehicle] = field(default_factory=list)
    iteration_rows: list[dict] = field(default_factory=list)
    steps: list[ControlStepRecord] = field(default_factory=list)

    @property
    def dt(self) -> float:
        return float(self.metadata["traj_step"])

    @property
    def study_time(self) -> float:
        return float(self.metadata["study_period"])

    def trajectories(self) -> pd.DataFrame:
        return pd.DataFrame(self.trajectory_rows, columns=TRAJECTORY_COLUMNS)

    def signals(self) -> pd.DataFrame:
        rows = [(n, lane, self.history.indication(lane, n).value)
                for n in range(self.history.start, self.history.end) for lane in self.history.lanes]
        return pd.DataFrame(rows, columns=SIGNAL_COLUMNS)

    def vehicle_table(self) -> pd.DataFrame:
        rows = [(v.id, v.lane, v.kind.value, v.arrival_time, v.entry_time, v.exit_time, v.delay, v.stops,
                 v.exit_time is not None) for v in sorted(self.vehicles, key=lambda v: v.id)]
        return pd.DataFrame(rows, columns=VEHICLE_COLUMNS)

    def iterations(self) -> pd.DataFrame:
        return pd.DataFrame(self.iteration_rows, columns=ITERATION_COLUMNS)

    def timing(self) -> pd.DataFrame:
        rows = [(s.step, s.mode, s.wall_time, s.iterations, int(s.converged), int(s.fallback)) for s in self.steps]
        return pd.DataFrame(rows, columns=TIMING_COLUMNS)

    @property
    def total_delay(self) -> float:
        return float(sum(v.delay for v in self.vehicles))


def write_frame(frame: pd.DataFrame, path: str | Path, metadata: dict, index: bool = False) -> Path:
    """写出 CSV，首行注释记录配置摘要与随机种子"""
    path = Path(path)
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(f"# config_hash={metadata['config_hash']} seed={metadata['seed']}\n")
        frame.to_csv(f, index=index, float_format="%.6f", lineterminator="\n")
    return path


def write_log(log: SimulationLog, out_dir: str | Path) -> dict[str, Path]:
    """写出一次运行的全部结果文件

    每个 CSV 以一行注释开头，记录配置摘要与随机种子。

    Args:
        log: 仿真日志
        out_dir: 输出目录

    Returns:
        文件名到路径的映射
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "trajectories": out / "trajectories.csv",
        "signals": out / "signals.csv",
        "vehicles": out / "vehicles.csv",
        "iterations": out / "iterations.csv",
        "timing": out / "timing.csv",
        "metadata": out / "metadata.yaml",
    }
    write_frame(log.trajectories(), paths["trajectories"], log.metadata)
    write_frame(log.signals(), paths["signals"], log.metadata)
    write_frame(log.vehicle_table(), paths["vehicles"], log.metadata)
    write_frame(log.iterations(), paths["iterations"], log.metadata)
    write_frame(log.timing(), paths["timing"], log.metadata)
    with open(paths["metadata"], "w", encoding="utf-8") as f:
        yaml.safe_dump(log.metadata, f, allow_unicode=True, sort_keys=True)
    logger.debug(f"结果已写入 {out}")
    return paths


def write_metrics(metrics: dict, out_dir: str | Path, metadata: dict) -> Path:
    """写出 metrics.yaml（附带配置摘要与种子）"""
    path = Path(out_dir) / "metrics.yaml"
    payload = {"config_hash": metadata["config_hash"], "seed": metadata["seed"], **metrics}
    with open(path, "w", encoding="utf-8") as f:
        yaml.safe_dump(payload, f, allow_unicode=True, sort_keys=True)
    return path


def read_csv(path: str | Path) -> pd.DataFrame:
    """读取带注释头的结果 CSV"""
    return pd.read_csv(path, comment="#")
