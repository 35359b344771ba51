#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : rbf_policy.py
@Time    : 2025年08月06日 09:20:00
@Author  : 宝总
@Version : 1.0
@Desc    : 饱和径向基函数策略

π(x) = u_M tanh( Σ_i (w_i/u_M) exp(-‖a_i - φ(x)‖²_Σ) ),  Σ = LᵀL
φ(x) = [qd1, qd2, cos q1, cos q2, sin q1, sin q2]
"""

import logging
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from core.artifacts import read_json, write_json
from core.exceptions import CheckpointError
from plant.dynamics import JointState

logger = logging.getLogger(__name__)

FEATURE_DIM = 6


@dataclass(frozen=True)
class PolicyParams:
    """
    策略参数

    weights (N_b,), centers (N_b, 6), shape_factor L (6, 6), Σ_π = LᵀL 始终半正定。
    记录梯度时数组字段会被替换为 Var, 因此这里不做类型转换。
    """
    weights: np.ndarray
    centers: np.ndarray
    shape_factor: np.ndarray
    u_max: float = 3.0

    @property
    def n_basis(self) -> int:
        return len(self.weights)

    @property
    def shape_matrix(self) -> np.ndarray:
        L = np.asarray(self.shape_factor)
        return L.T @ L

    def tensors(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.weights, self.centers, self.shape_factor

    def with_tensors(self, weights, centers, shape_factor) -> "PolicyParams":
        return PolicyParams(weights, centers, shape_factor, self.u_max)

    def flatten(self) -> np.ndarray:
        """展平顺序: w, A (行优先), L (行优先)"""
        return np.concatenate([np.ravel(t) for t in self.tensors()])

    def unflatten(self, theta: np.ndarray) -> "PolicyParams":
        theta = np.asarray(theta, dtype=float)
        nb = self.n_basis
        w = theta[:nb].copy()
        A = theta[nb:nb + nb * FEATURE_DIM].reshape(nb, FEATURE_DIM)
        L = theta[nb + nb * FEATURE_DIM:].reshape(FEATURE_DIM, FEATURE_DIM)
        return PolicyParams(w, A, L, self.u_max)

    def copy(self) -> "PolicyParams":
        return PolicyParams(
            np.array(self.weights, dtype=float),
            np.array(self.centers, dtype=float),
            np.array(self.shape_factor, dtype=float),
            self.u_max,
        )

    def to_dict(self) -> dict:
        return {
            "N_b": self.n_basis,
            "u_M": self.u_max,
            "w": np.asarray(self.weights).tolist(),
            "A": np.asarray(self.centers).tolist(),
            "L": np.asarray(self.shape_factor).tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "PolicyParams":
        w = np.asarray(data["w"], dtype=float)
        A = np.asarray(data["A"], dtype=float)
        L = np.asarray(data["L"], dtype=float)
        nb = int(data["N_b"])
        if w.shape != (nb,) or A.shape != (nb, FEATURE_DIM) or L.shape != (FEATURE_DIM, FEATURE_DIM):
            raise CheckpointError(
                f"策略检查点形状不匹配: w{w.shape}, A{A.shape}, L{L.shape}, N_b={nb}"
            )
        return cls(w, A, L, float(data["u_M"]))


def feature_map(state: JointState) -> np.ndarray:
    """φ(x) = [qd1, qd2, cos q1, cos q2, sin q1, sin q2]"""
    return np.concatenate([state.qd, np.cos(state.q), np.sin(state.q)])


def feature_map_batch(q, qd):
    return np.concatenate([qd, np.cos(q), np.sin(q)], axis=1)


def policy_eval_batch(params: PolicyParams, q, qd):
    """
    批量策略输出 (N,), 可对Var求导

    距离用展开式 |φLᵀ|² + |ALᵀ|² - 2 (φLᵀ)(ALᵀ)ᵀ 计算, 避免 N×N_b×6 的中间张量。
    """
    phi = feature_map_batch(q, qd)
    L = params.shape_factor
    p = phi @ L.T
    c = params.centers @ L.T
    p2 = np.reshape(np.sum(p * p, axis=1), (-1, 1))
    c2 = np.reshape(np.sum(c * c, axis=1), (1, -1))
    dist = np.maximum(p2 + c2 - 2.0 * (p @ c.T), 0.0)
    activation = np.exp(-dist) @ params.weights
    # tanh 在浮点下会取到 1.0, 截到 u_M 下方一个ulp保证 |u| < u_M
    limit = np.nextafter(params.u_max, 0.0)
    return np.clip(params.u_max * np.tanh(activation / params.u_max), -limit, limit)


def policy_eval(params: PolicyParams, state: JointState) -> float:
    """单状态策略输出 (N·m), |u| < u_M"""
    u = policy_eval_batch(params, state.q[None, :], state.qd[None, :])
    return float(np.asarray(u)[0])


def init_policy(
    seed: Union[int, np.random.SeedSequence, None],
    n_basis: int = 200,
    u_max: float = 3.0,
    velocity_range: float = 2.0 * np.pi,
) -> PolicyParams:
    """
    随机初始化: w ~ U(±u_M); 中心速度分量 ~ U(±velocity_range),
    三角分量取自同一组 U(-π, π] 角度的 (cos, sin); L = I
    """
    if n_basis < 1:
        raise ValueError("N_b 必须 ≥ 1")
    rng = np.random.default_rng(seed)
    weights = rng.uniform(-u_max, u_max, size=n_basis)
    velocities = rng.uniform(-velocity_range, velocity_range, size=(n_basis, 2))
    angles = np.pi - rng.uniform(0.0, 2.0 * np.pi, size=(n_basis, 2))
    centers = np.concatenate([velocities, np.cos(angles), np.sin(angles)], axis=1)
    return PolicyParams(weights, centers, np.eye(FEATURE_DIM), float(u_max))


def dropout_mask(n_basis: int, rate: float, noise: Union[np.random.Generator, np.ndarray]) -> np.ndarray:
    """反向dropout掩码: Bernoulli(1-rate)/(1-rate); noise 为生成器或 U[0,1) 样本"""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate 必须在 [0, 1) 内")
    if rate == 0.0:
        return np.ones(n_basis)
    if isinstance(noise, np.random.Generator):
        noise = noise.random(n_basis)
    noise = np.asarray(noise, dtype=float).reshape(n_basis)
    return (noise >= rate).astype(float) / (1.0 - rate)


def apply_dropout(
    params: PolicyParams,
    rate: float,
    noise: Union[np.random.Generator, np.ndarray, None] = None,
    mask: Optional[np.ndarray] = None,
) -> PolicyParams:
    """只对权重 w 施加dropout; 中心与形状矩阵不变"""
    if rate == 0.0 and mask is None:
        return params
    if mask is None:
        if noise is None:
            raise ValueError("需要提供 noise 或 mask")
        mask = dropout_mask(params.n_basis, rate, noise)
    return PolicyParams(params.weights * mask, params.centers, params.shape_factor, params.u_max)


def save_policy(path, params: PolicyParams):
    return write_json(path, params.to_dict(), kind="rbf_policy")


def load_policy(path) -> PolicyParams:
    return PolicyParams.from_dict(read_json(path, kind="rbf_policy"))
