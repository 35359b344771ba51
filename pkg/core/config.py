#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : config.py
@Time    : 2025年08月04日 15:10:00
@Author  : 宝总
@Version : 1.0
@Desc    : 实验配置 - pydantic模型 + 扁平 KEY=value 文件

文件格式: `<section>.<field>=value`, 例如 `plant.m1=0.608`、`optimizer.n_particles=400`;
`variant` 与 `mode` 为顶层键。加载顺序: 默认值 → 变体预设 → 用户文件。
"""

import logging
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple

import numpy as np
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from plant.dynamics import PlantParams
from plant.simulator import control_substeps

from .artifacts import atomic_write_text
from .exceptions import ConfigError

logger = logging.getLogger(__name__)


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class GpConfig(_Section):
    sampling_time: float = Field(0.02, gt=0, description="控制/模型采样时间 T_s (s)")
    max_points: int = Field(2000, ge=1, description="Subset of Data 上限")
    max_iterations: int = Field(500, ge=1, description="超参数L-BFGS-B最大迭代")

    @model_validator(mode="after")
    def _check_sampling_time(self):
        control_substeps(self.sampling_time)
        return self


class PolicyConfig(_Section):
    n_basis: int = Field(200, ge=1, description="RBF基函数个数 N_b")
    velocity_range: float = Field(2.0 * np.pi, gt=0, description="中心速度分量范围 (rad/s)")


class OptimizerConfig(_Section):
    n_particles: int = Field(400, ge=1)
    horizon: float = Field(3.0, gt=0, description="优化时域 (s)")
    learning_rate: float = Field(0.01, gt=0)
    max_steps: int = Field(1500, ge=0)
    exit_window: int = Field(50, ge=1, description="代价滑动平均窗口")
    exit_span: int = Field(100, ge=1, description="比较滑动平均的步距")
    exit_tolerance: float = Field(0.005, ge=0, description="相对改进阈值")
    dropout_rate: float = Field(0.25, ge=0, lt=1)
    grad_clip: Optional[float] = Field(None, gt=0, description="全局梯度范数裁剪, 空为不裁剪")
    divergence_ceiling: float = Field(50.0, gt=0, description="粒子发散速度阈值 (rad/s)")
    cost_length_scale: float = Field(3.0, gt=0, description="饱和代价 ℓ_c")
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)

    def horizon_steps(self, sampling_time: float) -> int:
        return max(int(round(self.horizon / sampling_time)), 1)


class CurriculumConfig(_Section):
    k_m: int = Field(5, ge=0, description="课程起点试验序号")
    ramp: int = Field(10, ge=1, description="课程爬升长度 K")
    trials: int = Field(20, ge=1, description="总试验数")
    velocity_epsilon: float = Field(0.005, ge=0, description="初始速度范围 ε (rad/s)")
    exploration_duration: float = Field(3.0, gt=0)
    exploration_segment: float = Field(0.1, gt=0, description="探索力矩分段长度 (s)")
    execution_duration: Optional[float] = Field(None, gt=0, description="执行时长, 空为优化时域")

    def x_max(self) -> np.ndarray:
        return np.array([np.pi, np.pi, self.velocity_epsilon, self.velocity_epsilon])


class ControlConfig(_Section):
    damping_enabled: bool = True
    damping_gain: float = Field(0.5, gt=0, description="D (N·m·s/rad)")
    damping_enter: float = Field(20.0, gt=0, description="进入阻尼模式的速度 (rad/s)")
    damping_exit: float = Field(4.0, gt=0, description="回到策略模式的速度 (rad/s)")
    lqr_enabled: bool = False
    lqr_q: Tuple[float, float, float, float] = (10.0, 10.0, 1.0, 1.0)
    lqr_r: float = Field(1.0, gt=0)
    lqr_rho: Optional[float] = Field(None, gt=0, description="RoA阈值 ρ, 空为仿真标定")
    lqr_exit_factor: float = Field(4.0, ge=1)

    @model_validator(mode="after")
    def _check_hysteresis(self):
        if self.damping_exit >= self.damping_enter:
            raise ValueError("damping_exit 必须小于 damping_enter")
        return self


class HarnessConfig(_Section):
    episode_duration: float = Field(60.0, gt=0)
    reset_gap_min: float = Field(5.0, gt=0)
    reset_gap_max: float = Field(15.0, gt=0)
    reset_rate: float = Field(1.0, ge=0, description="重置强度系数, 0为不重置")
    reset_duration: float = Field(0.2, gt=0)
    pid_kp: float = 10.0
    pid_ki: float = 0.0
    pid_kd: float = 1.0
    success_angle: float = Field(0.1, gt=0, description="成功区域角度误差 (rad)")
    success_velocity: float = Field(0.5, gt=0, description="成功区域速度 (rad/s)")
    control_period: float = Field(0.02, gt=0, description="评测控制器采样周期 (s), 需为仿真步长整数倍")
    episodes: int = Field(1, ge=1)
    workers: int = Field(1, ge=1)

    @model_validator(mode="after")
    def _check_gaps(self):
        if self.reset_gap_max < self.reset_gap_min:
            raise ValueError("reset_gap_max 必须 ≥ reset_gap_min")
        control_substeps(self.control_period)
        return self


class LabConfig(_Section):
    """完整实验配置"""
    variant: Literal["pendubot", "acrobot"] = "pendubot"
    mode: Literal["incremental", "standard"] = "incremental"
    seed: int = 0
    plant: PlantParams = PlantParams()
    gp: GpConfig = GpConfig()
    policy: PolicyConfig = PolicyConfig()
    optimizer: OptimizerConfig = OptimizerConfig()
    curriculum: CurriculumConfig = CurriculumConfig()
    control: ControlConfig = ControlConfig()
    harness: HarnessConfig = HarnessConfig()

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.plant.variant != self.variant:
            raise ValueError(f"plant.variant={self.plant.variant} 与 variant={self.variant} 不一致")
        if not np.isclose(self.harness.control_period, self.gp.sampling_time):
            raise ValueError("harness.control_period 必须等于 gp.sampling_time")
        return self

    @property
    def horizon_steps(self) -> int:
        return self.optimizer.horizon_steps(self.gp.sampling_time)

    @property
    def execution_duration(self) -> float:
        return self.curriculum.execution_duration or self.optimizer.horizon


SECTIONS = {
    "plant": PlantParams,
    "gp": GpConfig,
    "policy": PolicyConfig,
    "optimizer": OptimizerConfig,
    "curriculum": CurriculumConfig,
    "control": ControlConfig,
    "harness": HarnessConfig,
}
TOP_LEVEL = ("variant", "mode", "seed")

VARIANT_PRESETS: Dict[str, Dict[str, Any]] = {
    "pendubot": {
        "optimizer.horizon": 3.0,
        "control.damping_enabled": True,
        "control.lqr_enabled": False,
    },
    "acrobot": {
        "optimizer.horizon": 2.0,
        "control.damping_enabled": False,
        "control.lqr_enabled": True,
    },
}


def _parse_value(key: str, raw: str) -> Any:
    """元组字段用逗号分隔, 空串表示None, 其余交给pydantic做类型转换"""
    if raw is None:
        return None
    raw = raw.strip()
    if raw == "" or raw.lower() == "none":
        return None
    if key == "control.lqr_q":
        return tuple(float(v) for v in raw.split(","))
    return raw


def _nest(flat: Dict[str, Any]) -> Dict[str, Any]:
    nested: Dict[str, Any] = {name: {} for name in SECTIONS}
    for key, value in flat.items():
        if key in TOP_LEVEL:
            nested[key] = value
            continue
        section, _, field_name = key.partition(".")
        if section not in SECTIONS or field_name not in SECTIONS[section].model_fields:
            raise ConfigError(f"未知配置项: {key}")
        nested[section][field_name] = value
    return nested


def build_config(values: Optional[Dict[str, Any]] = None) -> LabConfig:
    """由扁平键值构造 LabConfig; 变体预设先于用户值生效"""
    values = dict(values or {})
    variant = values.get("variant", "pendubot")
    if variant not in VARIANT_PRESETS:
        raise ConfigError(f"未知变体: {variant}")
    merged = {**VARIANT_PRESETS[variant], **values}
    merged["variant"] = variant
    merged["plant.variant"] = variant
    nested = _nest(merged)
    try:
        return LabConfig(**nested)
    except ValidationError as e:
        raise ConfigError(f"配置非法: {e}") from e


def load_config(path=None, variant: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> LabConfig:
    """读取扁平配置文件 (可选), 命令行变体与覆盖项优先"""
    user: Dict[str, Any] = {}
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"配置文件不存在: {path}")
        for key, raw in dotenv_values(path).items():
            parsed = _parse_value(key, raw)
            if parsed is not None:
                user[key] = parsed
        logger.info("✅ 已加载配置文件 %s (%d 项)", path, len(user))
    if variant is not None:
        user["variant"] = variant
    if overrides:
        user.update(overrides)
    return build_config(user)


def config_to_flat(config: LabConfig) -> Dict[str, Any]:
    flat: Dict[str, Any] = {key: getattr(config, key) for key in TOP_LEVEL}
    for section in SECTIONS:
        for name, value in getattr(config, section).model_dump().items():
            flat[f"{section}.{name}"] = value
    return flat


def _format_value(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, (tuple, list)):
        return ",".join(repr(float(v)) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_snapshot(config: LabConfig, path) -> Path:
    """把解析后的完整配置写回同一扁平格式 (config.snapshot)"""
    lines: List[str] = ["# swingup-lab resolved configuration"]
    for key, value in config_to_flat(config).items():
        lines.append(f"{key}={_format_value(value)}")
    return atomic_write_text(path, "\n".join(lines) + "\n")
