#!/usr/bin/env python3
"""
实验界面模块 - 显示扫描进度、单元状态与汇总表
"""
from rich.box import ROUNDED, SIMPLE
from rich.console import Console
from rich.panel import Panel
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn
from rich.table import Table

from core.config_manager import load_scenario
from core.metrics import delay_vs_penetration, sweep_table
from core.task_manager import Cell, CellRunner, CellStatus, write_sweep
from models.experiment_schema import ExperimentPlan, RuntimeSettings


class ExperimentInterface:
    """实验扫描界面"""

    def __init__(self, console: Console):
        self.console = console

    def run(self, plan: ExperimentPlan, settings: RuntimeSettings) -> int:
        """运行扫描并显示结果

        Returns:
            退出码：全部单元成功为 0，否则为 1
        """
        runner = CellRunner(plan, settings)
        base = load_scenario(plan.scenario)
        self.console.print(Panel(
            f"场景 [cyan]{base.name}[/cyan]  配置摘要 [dim]{base.config_hash[:12]}[/dim]\n"
            f"控制器 {', '.join(plan.controllers)} | 渗透率 {', '.join(f'{p:.0%}' for p in plan.penetrations)} | "
            f"种子 {', '.join(map(str, plan.seeds))} | 并行 {plan.jobs}",
            title="实验计划", title_align="left", border_style="cyan", box=ROUNDED,
        ))

        with Progress(SpinnerColumn(), TextColumn("{task.description}"), BarColumn(), MofNCompleteColumn(),
                      TimeElapsedColumn(), console=self.console) as progress:
            bar = progress.add_task("运行单元", total=len(runner.cells))

            def on_update(cell: Cell):
                if cell.status == CellStatus.RUNNING:
                    progress.update(bar, description=f"运行 {cell.label}")
                elif cell.status in (CellStatus.COMPLETED, CellStatus.FAILED):
                    progress.advance(bar)

            runner.run(on_update)

        metadata = {"config_hash": base.config_hash, "seed": ",".join(map(str, plan.seeds))}
        write_sweep(runner.cells, plan.out, metadata)
        self._show_summary(runner)
        failed = runner.failed()
        if failed:
            self.console.print(Panel(
                "\n".join(f"[red]{cell.error}[/red]" for cell in failed),
                title=f"{len(failed)} 个单元失败", title_align="left", border_style="red", box=ROUNDED,
            ))
            return 1
        self.console.print(f"[green]✅ 全部 {len(runner.cells)} 个单元完成，结果位于 {plan.out}[/green]")
        return 0

    def _show_summary(self, runner: CellRunner):
        rows = runner.rows()
        if not rows:
            return
        table = Table(box=SIMPLE, show_header=True, header_style="bold white")
        for column, style in (("控制器", "cyan"), ("渗透率", "yellow"), ("平均延误 (s)", "green"),
                              ("总延误 (s)", "blue")):
            table.add_column(column, style=style, justify="right")
        for _, row in delay_vs_penetration(sweep_table(rows)).iterrows():
            table.add_row(row["controller"], f"{row['penetration']:.0%}", f"{row['average_delay']:.2f}",
                          f"{row['total_delay']:.1f}")
        self.console.print(Panel(table, title="延误汇总", title_align="left", border_style="cyan", box=ROUNDED,
                                 padding=(0, 2)))
