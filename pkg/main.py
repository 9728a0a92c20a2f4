#!/usr/bin/env python3
"""
whitephase 命令行入口

run        运行 (控制器, 渗透率, 种子) 扫描并写出结果文件
verify     运行验收测试组
export-lp  导出某一仿真步上某辆车的优化模型（LP 文本）

结果文件：
- 每个单元目录 <out>/<controller>/p<pct>/seed<n>/ 下：
  trajectories.csv  step,time,vehicle,lane,kind,x,v,a（每个轨迹步每辆车一行）
  signals.csv       step,lane,indication（每个信号步每条车道一行）
  vehicles.csv      vehicle,lane,kind,arrival,entry,exit,delay,stops,completed
  iterations.csv    step,iteration,max_delta,votes_stable,schedule_fixed,infeasible
  timing.csv        step,mode,wall_time,iterations,converged,fallback（墙钟时间，重复运行时不要求一致）
  ttc.csv / comfort.csv / metrics.yaml / metadata.yaml / run.log
- <out>/ 下的扫描汇总：summary.csv、delay_vs_penetration.csv、activation_vs_penetration.csv、
  ablation.csv、baseline_actuated.csv、baseline_fixed_time.csv、ttc.csv、comfort.csv
所有 CSV 首行为注释 "# config_hash=... seed=..."。
"""
from pathlib import Path

import psutil
import typer
from rich.box import ROUNDED
from rich.console import Console
from rich.panel import Panel

from core.config_manager import load_scenario, override_scenario
from core.controller import Simulation
from core.errors import WhitePhaseError
from core.logger import set_log_level
from core.opt_engine import export_lp
from core.verify import BATTERIES
from core.version import FULL_VERSION, ROOT_DIR, solver_backends
from features.experiment import ExperimentInterface
from features.verify import VerifyInterface
from models.experiment_schema import ExperimentPlan, RuntimeSettings

SCENARIO_DIR = ROOT_DIR / "scenarios"
DEFAULT_SCENARIO = SCENARIO_DIR / "default.yaml"
CALIBRATION_SCENARIO = SCENARIO_DIR / "calibration.yaml"

app = typer.Typer(name="whitephase", help="白灯相位信号交叉口仿真与分布式控制", no_args_is_help=True)
console = Console()


def _split(values: list[str] | None) -> list[str]:
    """展开逗号分隔的多值参数并去重（保持顺序）"""
    out = [item.strip() for value in values or [] for item in value.split(",") if item.strip()]
    return list(dict.fromkeys(out))


def _settings(log_level: str | None, backend: str | None, workers: int | None) -> RuntimeSettings:
    settings = RuntimeSettings()
    update = {k: v for k, v in (("log_level", log_level and log_level.upper()), ("solver_backend", backend),
                                ("workers", workers)) if v is not None}
    if update:
        settings = RuntimeSettings(**{**settings.model_dump(), **update})
    set_log_level(settings.log_level)
    return settings


def _fail(title: str, message: str, code: int = 1):
    console.print(Panel(f"[red]{message}[/red]", title=title, title_align="left", border_style="red", box=ROUNDED))
    raise typer.Exit(code)


@app.command()
def run(
    scenario: Path = typer.Option(DEFAULT_SCENARIO, "--scenario", "-s", help="场景文件 (YAML)"),
    controller: list[str] = typer.Option(["white"], "--controller", "-c",
                                         help="控制器：white / no_white / actuated / fixed_time，可逗号分隔"),
    penetration: list[str] = typer.Option(["50"], "--penetration", "-p", help="CAV 渗透率 (%)，可逗号分隔"),
    seed: list[str] = typer.Option(["1"], "--seed", help="随机种子，可重复或逗号分隔"),
    demand_level: int | None = typer.Option(None, "--demand-level", min=1, max=3, help="需求等级覆盖"),
    study_period: float | None = typer.Option(None, "--study-period", help="研究时段覆盖 (s)"),
    out: Path = typer.Option(Path("runs"), "--out", "-o", help="输出目录"),
    jobs: int = typer.Option(1, "--jobs", "-j", min=0, help="并行单元数，0 表示物理核数"),
    log_level: str | None = typer.Option(None, "--log-level", help="日志级别"),
    backend: str | None = typer.Option(None, "--backend", help="求解后端：native / highs"),
    workers: int | None = typer.Option(None, "--workers", min=1, help="每轮协商的求解线程数"),
):
    """运行仿真扫描：每个 (控制器, 渗透率, 种子) 一个单元"""
    try:
        settings = _settings(log_level, backend, workers)
        plan = ExperimentPlan(
            scenario=scenario, controllers=_split(controller),
            penetrations=[float(p) / 100.0 for p in _split(penetration)],
            seeds=[int(s) for s in _split(seed)], demand_level=demand_level, study_period=study_period,
            out=out, jobs=jobs or psutil.cpu_count(logical=False) or 1,
        )
        code = ExperimentInterface(console).run(plan, settings)
    except ValueError as e:
        _fail("参数错误", str(e))
    except WhitePhaseError as e:
        _fail(type(e).__name__, str(e))
    raise typer.Exit(code)


@app.command()
def verify(
    battery: list[str] = typer.Option(list(BATTERIES), "--battery", "-b", help=f"测试组：{', '.join(BATTERIES)}"),
    scenario: Path | None = typer.Option(None, "--scenario", "-s", help="仿真类测试组的场景，缺省为 default.yaml"),
    penetration: list[str] | None = typer.Option(None, "--penetration", "-p", help="渗透率 (%)"),
    seed: list[str] | None = typer.Option(None, "--seed", help="随机种子"),
    study_period: float | None = typer.Option(None, "--study-period", help="研究时段 (s)"),
    out: Path = typer.Option(Path("runs/verify"), "--out", "-o", help="报告输出目录"),
    log_level: str | None = typer.Option(None, "--log-level", help="日志级别"),
    backend: str | None = typer.Option(None, "--backend", help="求解后端：native / highs"),
):
    """运行验收测试组，任一失败时退出码为 1"""
    try:
        settings = _settings(log_level, backend, None)
        names = _split(battery)
        unknown = [name for name in names if name not in BATTERIES]
        if unknown:
            raise ValueError(f"未知测试组 {unknown}，可选 {list(BATTERIES)}")
        sim = load_scenario(scenario or DEFAULT_SCENARIO)
        scenarios = {"safety": sim, "signal_legality": sim,
                     "convergence": load_scenario(scenario or CALIBRATION_SCENARIO)}
        common: dict = {}
        if penetration:
            common["penetrations"] = tuple(float(p) / 100.0 for p in _split(penetration))
        if seed:
            common["seeds"] = tuple(int(s) for s in _split(seed))
        if study_period is not None:
            common["study_period"] = study_period
        options = {"safety": common, "signal_legality": common}
        code = VerifyInterface(console).run(names, scenarios, settings, out, options)
    except ValueError as e:
        _fail("参数错误", str(e))
    except WhitePhaseError as e:
        _fail(type(e).__name__, str(e))
    raise typer.Exit(code)


@app.command("export-lp")
def export_lp_command(
    step: int = typer.Option(..., "--step", "-t", min=0, help="轨迹步号"),
    vehicle: int = typer.Option(..., "--vehicle", "-v", help="车辆编号"),
    scenario: Path = typer.Option(DEFAULT_SCENARIO, "--scenario", "-s", help="场景文件 (YAML)"),
    controller: str = typer.Option("white", "--controller", "-c", help="控制器：white / no_white"),
    penetration: float | None = typer.Option(None, "--penetration", "-p", help="CAV 渗透率 (%)"),
    seed: int | None = typer.Option(None, "--seed", help="随机种子"),
    demand_level: int | None = typer.Option(None, "--demand-level", min=1, max=3, help="需求等级覆盖"),
    out: Path | None = typer.Option(None, "--out", "-o", help="输出文件，缺省为 program_<vehicle>_<step>.lp"),
    log_level: str | None = typer.Option(None, "--log-level", help="日志级别"),
):
    """仿真到指定步，导出该步协商第一轮中某辆车的模型"""
    try:
        settings = _settings(log_level, None, None)
        sc = override_scenario(load_scenario(scenario), seed=seed, demand_level=demand_level,
                               penetration=None if penetration is None else penetration / 100.0)
        program = Simulation(sc, controller, settings).program_at(step, vehicle)
        path = out or Path(f"program_{vehicle}_{step}.lp")
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(export_lp(program.lp), encoding="utf-8")
    except ValueError as e:
        _fail("参数错误", str(e))
    except WhitePhaseError as e:
        _fail(type(e).__name__, str(e))
    console.print(f"[green]✅ 已导出 {program.lp.name}: {program.lp.n_vars} 个变量，{program.lp.n_rows} 行 → "
                  f"{path}[/green]")


@app.command()
def version():
    """显示版本号"""
    console.print(f"whitephase {FULL_VERSION}")
    console.print(f"求解后端: {', '.join(solver_backends())}")


if __name__ == "__main__":
    app()
