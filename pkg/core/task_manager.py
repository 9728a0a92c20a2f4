#!/usr/bin/env python3
"""
实验单元调度模块 - 按 (控制器, 渗透率, 种子) 并行运行仿真单元
"""
import asyncio
import time
from collections.abc import Callable
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import pandas as pd

from core.config_manager import load_scenario, override_scenario
from core.controller import run_study
from core.errors import CellError, WhitePhaseError
from core.logger import add_file_sink, get_logger, remove_file_sink, set_log_level
from core.metrics import (
    activation_vs_penetration,
    comfort_stats,
    compute_metrics,
    compute_ttc,
    delay_vs_penetration,
    paired_comparison,
    summary_row,
    sweep_table,
    ttc_long_table,
)
from core.sim_log import read_csv, write_frame, write_log, write_metrics
from models.experiment_schema import ExperimentPlan, RuntimeSettings

logger = get_logger(__name__)


class CellStatus(Enum):
    """单元状态枚举"""
    PENDING = "pending"  # 等待执行
    RUNNING = "running"  # 正在执行
    COMPLETED = "completed"  # 执行完成
    FAILED = "failed"  # 执行失败


@dataclass
class Cell:
    """实验单元"""
    controller: str
    penetration: float
    seed: int
    out_dir: Path
    status: CellStatus = CellStatus.PENDING
    row: dict | None = None
    error: str | None = None
    start_time: float | None = None
    end_time: float | None = None
    execution_time: float | None = None

    @property
    def label(self) -> str:
        return f"{self.controller}/p={self.penetration:g}/seed={self.seed}"


def cell_dir(out: Path, controller: str, penetration: float, seed: int) -> Path:
    return out / controller / f"p{round(penetration * 100):03d}" / f"seed{seed}"


def run_cell(scenario_path: str, controller: str, penetration: float, seed: int, out_dir: str,
             demand_level: int | None = None, study_period: float | None = None,
             settings: dict | None = None) -> dict:
    """运行一个单元并写出结果文件（可在子进程中执行）

    Returns:
        汇总表中的一行

    Raises:
        CellError: 单元运行失败
    """
    runtime = RuntimeSettings(**(settings or {}))
    set_log_level(runtime.log_level)
    label = f"{controller}/p={penetration:g}/seed={seed}"
    out = Path(out_dir)
    log_path = out / "run.log"
    add_file_sink(log_path)
    try:
        scenario = override_scenario(load_scenario(scenario_path), penetration=penetration, seed=seed,
                                     demand_level=demand_level, study_period=study_period)
        log = run_study(scenario, controller, settings=runtime)
        write_log(log, out)
        events = compute_ttc(log, scenario.scene, scenario.params)
        write_frame(events.frame(), out / "ttc.csv", log.metadata)
        write_frame(comfort_stats(log).rename_axis("kind").reset_index(), out / "comfort.csv", log.metadata)
        metrics = compute_metrics(log, scenario.scene, scenario.params, events=events)
        write_metrics(metrics.as_dict(), out, log.metadata)
        return summary_row(controller, penetration, seed, metrics)
    except WhitePhaseError as e:
        logger.exception(f"单元 {label} 失败")
        raise CellError(label, str(e)) from e
    except Exception as e:
        logger.exception(f"单元 {label} 出现未预期错误")
        raise CellError(label, f"{type(e).__name__}: {e}") from e
    finally:
        remove_file_sink(log_path)


class CellRunner:
    """实验单元调度器 - 以进程池并行执行，单元之间不共享可变状态"""

    def __init__(self, plan: ExperimentPlan, settings: RuntimeSettings | None = None):
        self.plan = plan
        self.settings = settings or RuntimeSettings()
        self.cells: list[Cell] = [Cell(c, p, s, cell_dir(plan.out, c, p, s)) for c, p, s in plan.cells()]

    async def _execute(self, cell: Cell, pool: ProcessPoolExecutor | None, gate: asyncio.Semaphore,
                       on_update: Callable[[Cell], None] | None):
        async with gate:
            cell.status = CellStatus.RUNNING
            cell.start_time = time.time()
            if on_update:
                on_update(cell)
            args = (str(self.plan.scenario), cell.controller, cell.penetration, cell.seed, str(cell.out_dir),
                    self.plan.demand_level, self.plan.study_period, self.settings.model_dump())
            try:
                if pool is None:
                    cell.row = run_cell(*args)
                else:
                    loop = asyncio.get_running_loop()
                    cell.row = await loop.run_in_executor(pool, run_cell, *args)
                cell.status = CellStatus.COMPLETED
            except CellError as e:
                cell.error = str(e)
                cell.status = CellStatus.FAILED
            finally:
                cell.end_time = time.time()
                cell.execution_time = cell.end_time - cell.start_time
                if on_update:
                    on_update(cell)

    async def run_async(self, on_update: Callable[[Cell], None] | None = None) -> list[Cell]:
        """并行运行全部单元，jobs=1 时在当前进程中顺序执行"""
        gate = asyncio.Semaphore(self.plan.jobs)
        if self.plan.jobs == 1:
            for cell in self.cells:
                await self._execute(cell, None, gate, on_update)
            return self.cells
        with ProcessPoolExecutor(max_workers=self.plan.jobs) as pool:
            await asyncio.gather(*(self._execute(cell, pool, gate, on_update) for cell in self.cells))
        return self.cells

    def run(self, on_update: Callable[[Cell], None] | None = None) -> list[Cell]:
        return asyncio.run(self.run_async(on_update))

    def rows(self) -> list[dict]:
        return [cell.row for cell in self.cells if cell.row is not None]

    def failed(self) -> list[Cell]:
        return [cell for cell in self.cells if cell.status == CellStatus.FAILED]

    def get_cell_count(self) -> dict[str, int]:
        """获取各状态单元数量"""
        return {status.value: sum(1 for c in self.cells if c.status == status) for status in CellStatus}


def write_sweep(cells: list[Cell], out: str | Path, metadata: dict) -> dict[str, Path]:
    """汇总已完成单元，写出扫描结果表

    summary.csv 每个单元一行；delay_vs_penetration.csv 与 activation_vs_penetration.csv 按控制器与渗透率取均值；
    ablation.csv 对比 white 与 no_white，baseline_*.csv 对比 white 与基准控制；
    ttc.csv 与 comfort.csv 为带单元标签的长表。

    Args:
        cells: 单元列表（只汇总已完成的单元）
        out: 输出目录
        metadata: 含 config_hash 与 seed 的头信息

    Returns:
        文件名到路径的映射
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    done = [c for c in cells if c.status == CellStatus.COMPLETED and c.row is not None]
    table = sweep_table([c.row for c in done])
    controllers = set(table["controller"])
    frames = {
        "summary": table,
        "delay_vs_penetration": delay_vs_penetration(table),
        "activation_vs_penetration": activation_vs_penetration(table),
    }
    if {"white", "no_white"} <= controllers:
        frames["ablation"] = paired_comparison(table, "white", "no_white")
    for reference in ("actuated", "fixed_time"):
        if {"white", reference} <= controllers:
            frames[f"baseline_{reference}"] = paired_comparison(table, "white", reference)

    ttc, comfort = [], []
    for cell in done:
        labels = {"controller": cell.controller, "penetration": cell.penetration, "seed": cell.seed}
        ttc.append((labels, read_csv(cell.out_dir / "ttc.csv")))
        comfort.append(read_csv(cell.out_dir / "comfort.csv").assign(**labels))
    frames["ttc"] = ttc_long_table(ttc)
    if comfort:
        frames["comfort"] = pd.concat(comfort, ignore_index=True)

    paths = {name: write_frame(frame, out / f"{name}.csv", metadata) for name, frame in frames.items()}
    logger.info(f"扫描汇总: {len(done)}/{len(cells)} 个单元完成，结果写入 {out}")
    return paths
