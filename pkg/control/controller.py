#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : controller.py
@Time    : 2025年08月08日 14:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 50 Hz 部署控制器 - 策略 / 阻尼回退 / LQR 三种模式
"""

import logging
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np

from core.config import ControlConfig
from plant.dynamics import JointState, PlantParams
from policy.rbf_policy import PolicyParams, policy_eval

from .lqr import LqrStabilizer, in_roa

logger = logging.getLogger(__name__)


class ControllerMode(Enum):
    """控制器模式"""
    POLICY = "POLICY"
    DAMPING = "DAMPING"
    LQR = "LQR"


@dataclass(frozen=True)
class ControllerAssets:
    """不可变的控制器资产, 可在多个回合间共享"""
    params: PlantParams
    policy: Optional[PolicyParams] = None
    lqr: Optional[LqrStabilizer] = None
    damping_enabled: bool = True
    damping_gain: float = 0.5
    damping_enter: float = 20.0
    damping_exit: float = 4.0
    lqr_exit_factor: float = 4.0

    @property
    def lqr_enabled(self) -> bool:
        return self.lqr is not None

    @classmethod
    def from_config(
        cls,
        params: PlantParams,
        config: ControlConfig,
        policy: Optional[PolicyParams] = None,
        lqr: Optional[LqrStabilizer] = None,
    ) -> "ControllerAssets":
        # 阻尼回退只对 pendubot 定义
        damping = config.damping_enabled and params.variant == "pendubot"
        return cls(
            params=params,
            policy=policy,
            lqr=lqr if config.lqr_enabled else None,
            damping_enabled=damping,
            damping_gain=config.damping_gain,
            damping_enter=config.damping_enter,
            damping_exit=config.damping_exit,
            lqr_exit_factor=config.lqr_exit_factor,
        )


def _clamp(u: float, limit: float) -> float:
    if not np.isfinite(u):
        return 0.0
    return float(np.clip(u, -limit, limit))


def damping_controller(state: JointState, damping_gain: float, params: PlantParams) -> float:
    """u = -D · qd_a (驱动关节速度), 饱和到 ±u_M"""
    if damping_gain <= 0:
        raise ValueError("D 必须为正")
    return _clamp(-damping_gain * state.qd[params.actuated_joint], params.torque_limit)


def next_mode(state: JointState, mode: ControllerMode, assets: ControllerAssets) -> ControllerMode:
    """
    模式转移: POLICY→DAMPING / DAMPING→POLICY (速度滞回), POLICY→LQR;
    LQR 只有在 eᵀSe ≥ exit_factor·ρ 时退回 POLICY
    """
    speed = float(np.max(np.abs(state.qd)))
    if mode is ControllerMode.LQR:
        if assets.lqr is not None and assets.lqr.value(state) < assets.lqr_exit_factor * assets.lqr.rho:
            return ControllerMode.LQR
        logger.debug("⚠️ 状态离开LQR包络, 回到策略模式")
        mode = ControllerMode.POLICY
    if mode is ControllerMode.DAMPING:
        if speed < assets.damping_exit:
            return ControllerMode.POLICY
        return ControllerMode.DAMPING
    if assets.lqr_enabled and in_roa(state, assets.lqr):
        return ControllerMode.LQR
    if assets.damping_enabled and speed >= assets.damping_enter:
        return ControllerMode.DAMPING
    return ControllerMode.POLICY


def controller_step(
    state: JointState,
    mode: ControllerMode,
    assets: ControllerAssets,
) -> Tuple[float, ControllerMode]:
    """先推进模式, 再由新模式对应的子控制器给出饱和后的力矩"""
    mode = next_mode(state, mode, assets)
    limit = assets.params.torque_limit
    if mode is ControllerMode.LQR:
        u = assets.lqr.torque(state)
    elif mode is ControllerMode.DAMPING:
        u = damping_controller(state, assets.damping_gain, assets.params)
    elif assets.policy is not None:
        u = policy_eval(assets.policy, state)
    else:
        u = 0.0
    return _clamp(u, limit), mode


class Controller:
    """持有资产与当前模式的便捷封装, 单一调用方推进"""

    def __init__(self, assets: ControllerAssets, name: str = "controller"):
        self.assets = assets
        self.name = name
        self.mode = ControllerMode.POLICY

    def reset(self):
        self.mode = ControllerMode.POLICY

    def step(self, state: JointState) -> float:
        u, self.mode = controller_step(state, self.mode, self.assets)
        return u
