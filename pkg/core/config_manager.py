#!/usr/bin/env python3
"""
场景配置管理模块 - 读取、校验、覆盖与序列化场景文件
"""
import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import yaml
from pydantic import ValidationError

from core.errors import ScenarioError
from core.logger import get_logger
from core.scene import IntersectionScene, build_scene
from models.experiment_schema import BaselineConfig
from models.scenario_schema import DemandSchema, Parameters, ScenarioFileSchema

logger = get_logger(__name__)


@dataclass(frozen=True)
class Scenario:
    """校验后的场景：几何、参数、需求与基准配置"""
    name: str
    scene: IntersectionScene
    params: Parameters
    demand: DemandSchema
    baseline: BaselineConfig
    schema: ScenarioFileSchema

    @property
    def config_hash(self) -> str:
        return config_hash(self.schema)


def _format_error(e: ValidationError) -> str:
    parts = []
    for err in e.errors():
        loc = ".".join(str(p) for p in err["loc"])
        parts.append(f"{loc}: {err['msg']}" if loc else err["msg"])
    return "; ".join(parts)


def parse_scenario(data: dict) -> ScenarioFileSchema:
    """校验场景字典"""
    try:
        return ScenarioFileSchema.model_validate(data or {})
    except ValidationError as e:
        raise ScenarioError(f"场景校验失败: {_format_error(e)}") from e


def build_scenario(schema: ScenarioFileSchema) -> Scenario:
    """由校验后的模型构建场景对象，并检查大M取值"""
    scene = build_scene(schema.scene)
    params = schema.parameters
    needed = params.speed_max * params.planning_horizon + scene.extent
    if params.big_m < needed:
        raise ScenarioError(f"big_m={params.big_m} 过小，至少需要 {needed:.1f}")
    return Scenario(schema.name, scene, params, schema.demand, schema.baseline, schema)


def load_scenario(path: str | Path) -> Scenario:
    """读取场景文件

    Args:
        path: YAML 场景文件路径

    Returns:
        Scenario 对象，缺省参数取默认值
    """
    path = Path(path)
    if not path.exists():
        raise ScenarioError(f"场景文件不存在: {path}")
    try:
        with open(path, encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ScenarioError(f"场景文件解析失败: {path}: {e}") from e
    if data is not None and not isinstance(data, dict):
        raise ScenarioError(f"场景文件顶层必须是映射: {path}")
    scenario = build_scenario(parse_scenario(data))
    logger.debug(f"已加载场景 {scenario.name} ({path})")
    return scenario


def dump_scenario(schema: ScenarioFileSchema, path: str | Path | None = None) -> str:
    """序列化场景（包含所有声明字段），可选写入文件"""
    text = yaml.safe_dump(schema.model_dump(mode="json"), allow_unicode=True, sort_keys=False)
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def config_hash(schema: ScenarioFileSchema) -> str:
    """场景的规范化 SHA-256 摘要"""
    canonical = json.dumps(schema.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def override_scenario(scenario: Scenario, *, penetration: float | None = None, seed: int | None = None,
                      demand_level: int | None = None, study_period: float | None = None) -> Scenario:
    """应用命令行覆盖项并重新校验"""
    data = scenario.schema.model_dump(mode="json")
    if penetration is not None:
        data["demand"]["penetration"] = penetration
    if seed is not None:
        data["demand"]["seed"] = seed
    if demand_level is not None:
        data["demand"]["demand_level"] = demand_level
        data["demand"]["through_rate"] = None
    if study_period is not None:
        data["parameters"]["study_period"] = study_period
    return build_scenario(parse_scenario(data))
