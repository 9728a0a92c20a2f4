"""
实验计划、基准控制与运行时设置模型
"""
import os
from pathlib import Path
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

CONTROLLER_KINDS = ("white", "no_white", "actuated", "fixed_time")

# 定时控制的四个相位：每条道路先保护左转，再放行直行
FIXED_TIME_PHASES = ("EW_left", "EW_through", "NS_left", "NS_through")


class BaselineConfig(BaseModel):
    """基准信号控制配置"""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    kind: Literal["fixed_time", "actuated", "no_white"] = Field(default="actuated", description="基准类型")
    splits: dict[str, float] = Field(
        default_factory=lambda: {"EW_left": 12.0, "EW_through": 30.0, "NS_left": 12.0, "NS_through": 30.0},
        description="定时控制各相位时长（含黄灯与全红，s）",
    )
    cycle: float | None = Field(default=None, gt=0, description="周期长度 (s)，缺省为各相位之和")
    gap_out: float = Field(default=3.0, gt=0, description="感应控制的间隔时间阈值 (s)")
    min_green: float | None = Field(default=None, gt=0, description="相位最短绿灯 (s)，缺省取最短放行时间")
    max_green: float = Field(default=40.0, gt=0, description="相位最长绿灯 (s)")
    detector_length: float = Field(default=100.0, gt=0, description="停车线前检测区长度 (ft)")

    @field_validator("splits")
    @classmethod
    def validate_splits(cls, v: dict[str, float]) -> dict[str, float]:
        """校验相位划分"""
        if set(v) != set(FIXED_TIME_PHASES):
            raise ValueError(f"splits 必须恰好包含 {list(FIXED_TIME_PHASES)}")
        if any(value <= 0 for value in v.values()):
            raise ValueError("相位时长必须为正")
        return v

    @model_validator(mode="after")
    def check_cycle(self) -> "BaselineConfig":
        total = sum(self.splits.values())
        if self.cycle is not None and abs(self.cycle - total) > 1e-6:
            raise ValueError(f"相位时长之和 {total} 与周期 {self.cycle} 不一致")
        return self

    @property
    def cycle_length(self) -> float:
        return sum(self.splits.values())


class ExperimentPlan(BaseModel):
    """一次实验扫描的计划"""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    scenario: Path = Field(description="场景文件路径")
    controllers: list[str] = Field(default_factory=lambda: ["white"], description="控制器列表")
    penetrations: list[float] = Field(default_factory=lambda: [0.5], description="CAV 渗透率列表 (0-1)")
    seeds: list[int] = Field(default_factory=lambda: [1], description="随机种子列表")
    demand_level: int | None = Field(default=None, description="需求等级覆盖")
    study_period: float | None = Field(default=None, gt=0, description="研究时段覆盖 (s)")
    out: Path = Field(default=Path("runs"), description="输出目录")
    jobs: int = Field(default=1, ge=1, description="并行单元数")

    @field_validator("controllers")
    @classmethod
    def validate_controllers(cls, v: list[str]) -> list[str]:
        if not v:
            raise ValueError("控制器列表不能为空")
        unknown = [kind for kind in v if kind not in CONTROLLER_KINDS]
        if unknown:
            raise ValueError(f"未知控制器: {unknown}，可选 {list(CONTROLLER_KINDS)}")
        return v

    @field_validator("penetrations")
    @classmethod
    def validate_penetrations(cls, v: list[float]) -> list[float]:
        if not v:
            raise ValueError("渗透率列表不能为空")
        if any(not 0.0 <= p <= 1.0 for p in v):
            raise ValueError("渗透率必须在 [0, 1] 之间")
        return v

    @field_validator("seeds")
    @classmethod
    def validate_seeds(cls, v: list[int]) -> list[int]:
        if not v:
            raise ValueError("种子列表不能为空")
        return v

    @field_validator("out")
    @classmethod
    def validate_out(cls, v: Path) -> Path:
        """输出目录必须可写（不存在时检查最近的已存在父目录）"""
        existing = v
        while not existing.exists() and existing.parent != existing:
            existing = existing.parent
        if not os.access(existing, os.W_OK):
            raise ValueError(f"输出目录不可写: {v}")
        return v

    def cells(self) -> list[tuple[str, float, int]]:
        """展开为 (控制器, 渗透率, 种子) 单元，顺序固定"""
        return [(c, p, s) for c in self.controllers for p in self.penetrations for s in self.seeds]


class RuntimeSettings(BaseSettings):
    """运行时设置，可由 WHITEPHASE_ 前缀的环境变量覆盖"""
    model_config = SettingsConfigDict(env_prefix="WHITEPHASE_", extra="ignore")

    log_level: str = Field(default="INFO", pattern=r"^(DEBUG|INFO|WARNING|ERROR|CRITICAL)$", description="日志级别")
    workers: int = Field(default=1, ge=1, description="每轮协商的并行求解线程数")
    node_budget: int = Field(default=400, ge=1, description="分支定界节点上限")
    time_limit: float = Field(default=5.0, gt=0, description="单次求解时间上限 (s)")
    solver_backend: Literal["native", "highs"] = Field(default="native", description="求解后端")
    candidate_limit: int = Field(default=6, ge=1, description="每个投票模型的候选信号方案数量上限")
