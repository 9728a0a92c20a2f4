#!/usr/bin/env python3
"""
验收测试界面模块 - 运行测试组并输出报告
"""
from pathlib import Path

import yaml
from rich.box import ROUNDED, SIMPLE
from rich.console import Console
from rich.panel import Panel
from rich.table import Table

from core.config_manager import Scenario
from core.verify import BatteryReport, run_battery
from models.experiment_schema import RuntimeSettings


class VerifyInterface:
    """验收测试界面"""

    def __init__(self, console: Console):
        self.console = console

    def run(self, names: list[str], scenarios: dict[str, Scenario | None], settings: RuntimeSettings,
            out: Path, options: dict[str, dict]) -> int:
        """依次运行测试组，写出 verify_report.yaml

        Args:
            names: 测试组名称
            scenarios: 各测试组使用的场景
            settings: 运行时设置
            out: 报告输出目录
            options: 各测试组的额外参数

        Returns:
            退出码：全部通过为 0，否则为 1
        """
        reports: list[BatteryReport] = []
        for name in names:
            with self.console.status(f"[cyan]运行测试组 {name}...[/cyan]"):
                reports.append(run_battery(name, scenarios.get(name), settings, **options.get(name, {})))

        out.mkdir(parents=True, exist_ok=True)
        path = out / "verify_report.yaml"
        with open(path, "w", encoding="utf-8") as f:
            yaml.safe_dump({"batteries": [r.as_dict() for r in reports],
                            "passed": all(r.passed for r in reports)}, f, allow_unicode=True, sort_keys=False)

        self._show(reports)
        self.console.print(f"[dim]报告已写入 {path}[/dim]")
        return 0 if all(r.passed for r in reports) else 1

    def _show(self, reports: list[BatteryReport]):
        table = Table(box=SIMPLE, show_header=True, header_style="bold white")
        table.add_column("测试组", style="cyan bold")
        table.add_column("用例", justify="right")
        table.add_column("失败", justify="right", style="red")
        table.add_column("提示", justify="right", style="yellow")
        table.add_column("耗时", justify="right", style="blue")
        table.add_column("结果", justify="center")
        for r in reports:
            table.add_row(r.name, str(r.cases), str(len(r.failures)), str(len(r.warnings)), f"{r.wall_time:.1f}s",
                          "[green]通过[/green]" if r.passed else "[red]失败[/red]")
        self.console.print(Panel(table, title="验收测试", title_align="left", border_style="cyan", box=ROUNDED,
                                 padding=(0, 2)))
        for r in reports:
            lines = [f"[red]✗ {msg}[/red]" for msg in r.failures[:20]]
            lines += [f"[yellow]! {msg}[/yellow]" for msg in r.warnings]
            if len(r.failures) > 20:
                lines.append(f"[dim]… 另有 {len(r.failures) - 20} 条[/dim]")
            if lines:
                self.console.print(Panel("\n".join(lines), title=r.name, title_align="left",
                                         border_style="red" if r.failures else "yellow", box=ROUNDED))
