"""
场景文件数据模型

参数默认值取自案例研究的参数表；单位统一为 ft / s。
"""
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from models.experiment_schema import BaselineConfig

# 需求等级对应的直行车道流量 (veh/h/lane)
DEMAND_LEVELS: dict[int, float] = {1: 500.0, 2: 700.0, 3: 900.0}

_EPS = 1e-9


def _is_multiple(value: float, unit: float) -> bool:
    ratio = value / unit
    return abs(ratio - round(ratio)) < 1e-6 and round(ratio) >= 1


class Parameters(BaseModel):
    """全局参数"""
    model_config = ConfigDict(extra="forbid", validate_assignment=True, frozen=True)

    # 运动学
    accel_min: float = Field(default=-11.5, lt=0, description="最大减速度 (ft/s²)")
    accel_max: float = Field(default=13.0, gt=0, description="最大加速度 (ft/s²)")
    speed_min: float = Field(default=0.0, ge=0, description="最低速度 (ft/s)")
    speed_max: float = Field(default=42.5, gt=0, description="最高速度 (ft/s)")
    vehicle_length: float = Field(default=13.0, gt=0, description="车长 (ft)")
    same_lane_gap: float = Field(default=11.8, gt=0, description="同车道安全间距 D (ft)")
    stopbar_gap: float = Field(default=1.0, ge=0, description="停车线安全距离 S (ft)")
    group_gap: float = Field(default=40.0, gt=0, description="冲突点安全距离 ρ (ft)")
    chv_reaction: float = Field(default=1.0, gt=0, description="人工驾驶反应时间 (s)")
    cav_reaction: float = Field(default=0.1, gt=0, description="自动驾驶反应时间 (s)")

    # 信号
    max_green: float = Field(default=60.0, gt=0, description="最长绿灯 (s)")
    min_active_through: float = Field(default=12.0, gt=0, description="直行最短放行时间 (s)")
    min_active_left: float = Field(default=4.0, gt=0, description="左转最短放行时间 (s)")
    min_white_through: float = Field(default=6.0, gt=0, description="直行最短白灯 (s)")
    min_white_left: float = Field(default=4.0, gt=0, description="左转最短白灯 (s)")
    yellow: float = Field(default=4.0, gt=0, description="黄灯时长 (s)")
    all_red: float = Field(default=2.0, gt=0, description="全红时长 (s)")

    # 时间网格
    traj_step: float = Field(default=0.5, gt=0, description="轨迹步长 ΔT (s)")
    signal_step: float = Field(default=2.0, gt=0, description="信号步长 (s)")
    planning_horizon: float = Field(default=20.0, gt=0, description="规划时域 (s)")
    study_period: float = Field(default=900.0, gt=0, description="研究时段 (s)")

    # 车队与跟驰
    max_group_length: float = Field(default=360.0, gt=0, description="车队最大长度 (ft)")
    alpha1: float = Field(default=0.95, gt=0, description="速度差系数 (1/s)")
    alpha2: float = Field(default=0.25, gt=0, description="间距系数 (1/s²)")

    # 目标函数与协商
    comfort_weight: float = Field(default=2.0, ge=0, description="舒适性权重 ω (s)")
    white_incentive_weight: float = Field(default=50.0, ge=0, description="白灯激励权重")
    slack_penalty: float = Field(default=1.0e4, ge=0, description="松弛惩罚 ψ")
    tracking_penalty: float = Field(default=1.0e4, gt=0, description="跟驰加速度跟踪惩罚")
    big_m: float = Field(default=1.0e6, gt=0, description="大M常数")
    convergence_eps: float = Field(default=0.5, gt=0, description="收敛阈值 ε (ft)")
    max_agreement_iters: int = Field(default=25, ge=2, description="协商最大迭代次数")
    vote_deadline: int | None = Field(default=None, ge=2, description="强制聚合投票的迭代次数")
    slack_initial: float | None = Field(default=None, ge=0, description="初始松弛上限 δ₀ (ft)，默认 2ρ")

    # 评价与仿真
    ttc_threshold: float = Field(default=1.5, gt=0, description="TTC 阈值 (s)")
    chv_plant_noise: float = Field(default=0.5, ge=0, description="人工驾驶加速度噪声标准差 (ft/s²)")

    @model_validator(mode="after")
    def check_invariants(self) -> "Parameters":
        """校验跨字段约束"""
        if not self.speed_min < self.speed_max:
            raise ValueError("speed_min 必须小于 speed_max")
        if not _is_multiple(self.signal_step, self.traj_step):
            raise ValueError("traj_step 必须整除 signal_step")
        if not _is_multiple(self.planning_horizon, self.signal_step):
            raise ValueError("signal_step 必须整除 planning_horizon")
        if not _is_multiple(self.study_period, self.signal_step):
            raise ValueError("signal_step 必须整除 study_period")
        for name in ("max_green", "min_active_through", "min_active_left", "min_white_through",
                     "min_white_left", "yellow", "all_red"):
            if not _is_multiple(getattr(self, name), self.signal_step):
                raise ValueError(f"{name} 必须是 signal_step 的整数倍")
        white = min(self.min_white_through, self.min_white_left)
        bound = self.speed_max * (white + self.yellow) + self.same_lane_gap
        if self.max_group_length + _EPS < bound:
            raise ValueError(f"max_group_length 必须不小于 v̄·(W̲+Y)+D = {bound:.1f} ft")
        return self

    # 以下为离散网格换算
    @property
    def steps_per_signal(self) -> int:
        """每个信号步包含的轨迹步数"""
        return round(self.signal_step / self.traj_step)

    @property
    def horizon_steps(self) -> int:
        """规划时域内的轨迹步数"""
        return round(self.planning_horizon / self.traj_step)

    @property
    def signal_horizon(self) -> int:
        """规划时域内的信号步数"""
        return round(self.planning_horizon / self.signal_step)

    @property
    def study_steps(self) -> int:
        return round(self.study_period / self.traj_step)

    @property
    def slack_start(self) -> float:
        return 2.0 * self.group_gap if self.slack_initial is None else self.slack_initial

    @property
    def vote_deadline_iter(self) -> int:
        return self.vote_deadline if self.vote_deadline is not None else max(2, self.max_agreement_iters // 2)

    def with_overrides(self, **overrides) -> "Parameters":
        """返回覆盖部分字段后的新参数（重新校验）"""
        return Parameters.model_validate({**self.model_dump(), **overrides})

    def signal_steps(self, seconds: float) -> int:
        """把时长换算为信号步数"""
        return round(seconds / self.signal_step)

    def min_active(self, movement: str) -> float:
        return self.min_active_left if movement == "left" else self.min_active_through

    def min_white(self, movement: str) -> float:
        return self.min_white_left if movement == "left" else self.min_white_through


class LaneSchema(BaseModel):
    """车道定义（自定义布局使用）"""
    model_config = ConfigDict(extra="forbid")

    id: str = Field(description="车道标识")
    approach: str = Field(description="进口方向，如 EB/WB/NB/SB")
    movement: Literal["through", "left"] = Field(description="转向类型")
    destination: float = Field(gt=0, description="终点位置 r_l (ft)")


class ConflictSchema(BaseModel):
    """冲突点定义：沿 lane 轴的位置与沿 other 轴的位置"""
    model_config = ConfigDict(extra="forbid")

    lane: str
    other: str
    position: float = Field(gt=0, description="沿 lane 的冲突点位置 (ft)")
    other_position: float = Field(gt=0, description="沿 other 的冲突点位置 (ft)")


class SceneSchema(BaseModel):
    """交叉口几何"""
    model_config = ConfigDict(extra="forbid")

    layout: Literal["standard_four_leg", "custom"] = Field(default="standard_four_leg", description="布局")
    lanes_per_movement: int = Field(default=1, ge=1, description="每个转向的车道数")
    stop_bar: float = Field(default=650.0, gt=0, description="停车线位置 b (ft)")
    detection_range: float = Field(default=650.0, gt=0, description="检测范围 (ft)")
    lane_width: float = Field(default=12.0, gt=0, description="车道宽度 (ft)")
    exit_length: float = Field(default=200.0, gt=0, description="出口段长度 (ft)")
    lanes: list[LaneSchema] = Field(default_factory=list, description="自定义车道")
    conflicts: list[ConflictSchema] = Field(default_factory=list, description="冲突点（自定义或覆盖）")

    @model_validator(mode="after")
    def check_custom(self) -> "SceneSchema":
        if self.layout == "custom" and not self.lanes:
            raise ValueError("custom 布局必须给出 lanes")
        return self


class DemandSchema(BaseModel):
    """交通需求"""
    model_config = ConfigDict(extra="forbid", validate_assignment=True)

    demand_level: int | None = Field(default=3, description="需求等级 1/2/3")
    through_rate: float | None = Field(default=None, ge=0, description="直行车道流量 (veh/h/lane)")
    left_share: float = Field(default=0.08, ge=0, le=1, description="左转流量占直行比例")
    lane_rates: dict[str, float] = Field(default_factory=dict, description="按车道覆盖流量 (veh/h)")
    penetration: float = Field(default=0.5, ge=0, le=1, description="CAV 渗透率")
    seed: int = Field(default=1, ge=0, description="随机种子")

    @field_validator("demand_level")
    @classmethod
    def validate_level(cls, v: int | None) -> int | None:
        if v is not None and v not in DEMAND_LEVELS:
            raise ValueError(f"需求等级必须是 {sorted(DEMAND_LEVELS)} 之一")
        return v

    @field_validator("lane_rates")
    @classmethod
    def validate_rates(cls, v: dict[str, float]) -> dict[str, float]:
        for lane, rate in v.items():
            if rate < 0:
                raise ValueError(f"车道 {lane} 的流量不能为负")
        return v

    @model_validator(mode="after")
    def check_rate(self) -> "DemandSchema":
        if self.through_rate is None and self.demand_level is None:
            raise ValueError("必须给出 demand_level 或 through_rate")
        return self

    @property
    def resolved_through_rate(self) -> float:
        """直行车道流量，显式值优先"""
        if self.through_rate is not None:
            return self.through_rate
        return DEMAND_LEVELS[self.demand_level]

    def lane_rate(self, lane_id: str, movement: str) -> float:
        if lane_id in self.lane_rates:
            return self.lane_rates[lane_id]
        rate = self.resolved_through_rate
        return rate * self.left_share if movement == "left" else rate


class ScenarioFileSchema(BaseModel):
    """场景文件模型"""
    model_config = ConfigDict(extra="forbid")

    name: str = Field(default="default", description="场景名称")
    scene: SceneSchema = Field(default_factory=SceneSchema, description="几何")
    parameters: Parameters = Field(default_factory=Parameters, description="参数")
    demand: DemandSchema = Field(default_factory=DemandSchema, description="需求")
    baseline: BaselineConfig = Field(default_factory=BaselineConfig, description="基准控制配置")
