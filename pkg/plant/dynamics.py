#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : dynamics.py
@Time    : 2025年08月02日 14:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 欠驱动双摆刚体动力学 (pendubot / acrobot)

约定: q = [q1, q2], q1 为肩关节相对竖直向下的角度, q2 为肘关节相对第一连杆的角度;
q = [0, 0] 为下垂稳定平衡, q = [π, 0] 为倒立不稳定平衡。惯量 I1, I2 为绕各自质心的惯量。

批量函数接受形状 (N, 2) 的数组, 也接受梯度引擎的 Var, 供粒子仿真与GP先验均值复用。
"""

import logging
from dataclasses import dataclass
from typing import Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi


class PlantParams(BaseModel):
    """
    双摆物理参数 (SI单位)

    默认值是按比赛双摆硬件量级给出的示意值, 并非比赛权威常数。
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    m1: float = Field(0.608, gt=0, description="连杆1质量 kg")
    m2: float = Field(0.630, gt=0, description="连杆2质量 kg")
    l1: float = Field(0.300, gt=0, description="连杆1长度 m")
    l2: float = Field(0.200, gt=0, description="连杆2长度 m")
    r1: float = Field(0.300, gt=0, description="关节1到质心1距离 m")
    r2: float = Field(0.200, gt=0, description="关节2到质心2距离 m")
    I1: float = Field(0.005, gt=0, description="连杆1质心惯量 kg·m²")
    I2: float = Field(0.002, gt=0, description="连杆2质心惯量 kg·m²")
    b1: float = Field(0.0, ge=0, description="关节1粘滞阻尼 N·m·s/rad")
    b2: float = Field(0.0, ge=0, description="关节2粘滞阻尼 N·m·s/rad")
    g: float = Field(9.81, gt=0, description="重力加速度 m/s²")
    torque_limit: float = Field(3.0, gt=0, description="力矩上限 u_M N·m")
    variant: Literal["pendubot", "acrobot"] = "pendubot"

    @property
    def actuated_joint(self) -> int:
        return 0 if self.variant == "pendubot" else 1

    def actuation_matrix(self) -> np.ndarray:
        """B = diag(1,0) (pendubot) 或 diag(0,1) (acrobot)"""
        b = np.zeros((2, 2))
        b[self.actuated_joint, self.actuated_joint] = 1.0
        return b

    def actuation_vector(self) -> np.ndarray:
        """标量力矩在关节空间的作用方向"""
        return np.diag(self.actuation_matrix()).copy()


@dataclass(frozen=True)
class JointState:
    """广义位置 q (rad) 与速度 qd (rad/s)"""
    q: np.ndarray
    qd: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", np.asarray(self.q, dtype=float).reshape(2))
        object.__setattr__(self, "qd", np.asarray(self.qd, dtype=float).reshape(2))

    @classmethod
    def from_vector(cls, x) -> "JointState":
        x = np.asarray(x, dtype=float)
        return cls(x[:2], x[2:4])

    @classmethod
    def zero(cls) -> "JointState":
        return cls(np.zeros(2), np.zeros(2))

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.q, self.qd])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.q)) and np.all(np.isfinite(self.qd)))


# ---------------------------------------------------------------- 批量实现

def mass_matrix_entries(q2, params: PlantParams):
    """返回 (m11, m12, m22); m22 与姿态无关"""
    c2 = np.cos(q2)
    a = params.m2 * params.l1 * params.r2
    m11 = (params.I1 + params.I2 + params.m1 * params.r1 ** 2
           + params.m2 * (params.l1 ** 2 + params.r2 ** 2)) + 2.0 * a * c2
    m12 = (params.I2 + params.m2 * params.r2 ** 2) + a * c2
    m22 = params.I2 + params.m2 * params.r2 ** 2
    return m11, m12, m22


def bias_terms_batch(q, qd, params: PlantParams):
    """n(q, qd) = 科氏/离心 + 重力 + 粘滞阻尼, 输入形状 (N, 2)"""
    q1, q2 = q[:, 0], q[:, 1]
    qd1, qd2 = qd[:, 0], qd[:, 1]
    h = params.m2 * params.l1 * params.r2 * np.sin(q2)
    s12 = np.sin(q1 + q2)
    g1 = (params.m1 * params.r1 + params.m2 * params.l1) * params.g * np.sin(q1)
    g2 = params.m2 * params.r2 * params.g * s12
    n1 = -h * (2.0 * qd1 * qd2 + qd2 * qd2) + g1 + g2 + params.b1 * qd1
    n2 = h * qd1 * qd1 + g2 + params.b2 * qd2
    return n1, n2


def forward_dynamics_batch(q, qd, u, params: PlantParams):
    """qdd = M(q)⁻¹ (B u - n(q, qd)), q/qd 形状 (N, 2), u 形状 (N,); 不做力矩饱和"""
    m11, m12, m22 = mass_matrix_entries(q[:, 1], params)
    n1, n2 = bias_terms_batch(q, qd, params)
    if params.actuated_joint == 0:
        rhs1, rhs2 = u - n1, -n2
    else:
        rhs1, rhs2 = -n1, u - n2
    det = m11 * m22 - m12 * m12
    qdd1 = (m22 * rhs1 - m12 * rhs2) / det
    qdd2 = (m11 * rhs2 - m12 * rhs1) / det
    return np.stack([qdd1, qdd2], axis=-1)


def rk4_step_batch(q, qd, u, dt: float, params: PlantParams) -> Tuple[np.ndarray, np.ndarray]:
    """经典四阶Runge-Kutta, 力矩在步内零阶保持"""
    k1_q, k1_v = qd, forward_dynamics_batch(q, qd, u, params)
    q2_, v2_ = q + 0.5 * dt * k1_q, qd + 0.5 * dt * k1_v
    k2_q, k2_v = v2_, forward_dynamics_batch(q2_, v2_, u, params)
    q3_, v3_ = q + 0.5 * dt * k2_q, qd + 0.5 * dt * k2_v
    k3_q, k3_v = v3_, forward_dynamics_batch(q3_, v3_, u, params)
    q4_, v4_ = q + dt * k3_q, qd + dt * k3_v
    k4_q, k4_v = v4_, forward_dynamics_batch(q4_, v4_, u, params)
    q_next = q + (dt / 6.0) * (k1_q + 2.0 * k2_q + 2.0 * k3_q + k4_q)
    qd_next = qd + (dt / 6.0) * (k1_v + 2.0 * k2_v + 2.0 * k3_v + k4_v)
    return q_next, qd_next


# ---------------------------------------------------------------- 单状态接口

def mass_matrix(q, params: PlantParams) -> np.ndarray:
    """对称正定质量矩阵 M(q)"""
    q = np.asarray(q, dtype=float)
    m11, m12, m22 = mass_matrix_entries(q[1], params)
    return np.array([[m11, m12], [m12, m22]])


def bias_terms(q, qd, params: PlantParams) -> np.ndarray:
    n1, n2 = bias_terms_batch(
        np.asarray(q, dtype=float)[None, :], np.asarray(qd, dtype=float)[None, :], params
    )
    return np.array([n1[0], n2[0]])


def saturate_torque(u: float, params: PlantParams) -> Tuple[float, bool]:
    """力矩饱和到 [-u_M, u_M], 返回 (力矩, 是否被截断)"""
    u = float(u)
    limit = params.torque_limit
    if abs(u) > limit:
        return float(np.clip(u, -limit, limit)), True
    return u, False


def forward_dynamics(state: JointState, u: float, params: PlantParams) -> np.ndarray:
    """关节加速度 qdd (rad/s²), 超限力矩会被截断并记录"""
    u, clamped = saturate_torque(u, params)
    if clamped:
        logger.debug("⚠️ 力矩超限, 已截断到 %.3f N·m", u)
    qdd = forward_dynamics_batch(state.q[None, :], state.qd[None, :], np.array([u]), params)
    return qdd[0]


def rk4_step(state: JointState, u: float, dt: float, params: PlantParams) -> JointState:
    """单步RK4积分"""
    if dt <= 0:
        raise ValueError("dt 必须为正")
    u, clamped = saturate_torque(u, params)
    if clamped:
        logger.debug("⚠️ 力矩超限, 已截断到 %.3f N·m", u)
    q, qd = rk4_step_batch(state.q[None, :], state.qd[None, :], np.array([u]), dt, params)
    return JointState(q[0], qd[0])


def potential_energy(q, params: PlantParams):
    """势能, 以下垂构型为零点"""
    q = np.asarray(q, dtype=float)
    c1 = np.cos(q[..., 0])
    c12 = np.cos(q[..., 0] + q[..., 1])
    height = params.m1 * params.r1 * (1.0 - c1) + params.m2 * (
        params.l1 * (1.0 - c1) + params.r2 * (1.0 - c12)
    )
    return params.g * height


def total_energy(state: JointState, params: PlantParams) -> float:
    """动能 ½ qdᵀ M(q) qd 加势能"""
    kinetic = 0.5 * state.qd @ mass_matrix(state.q, params) @ state.qd
    return float(kinetic + potential_energy(state.q, params))


def wrap_angle(q):
    """把角度映射到 (-π, π]"""
    return np.pi - np.remainder(np.pi - q, TWO_PI)
