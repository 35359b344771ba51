#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : lqr.py
@Time    : 2025年08月08日 09:30:00
@Author  : 宝总
@Version : 1.0
@Desc    : 倒立平衡点线性化、LQR增益与吸引域判定
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from core.artifacts import read_json, write_json
from core.exceptions import RiccatiError
from plant.dynamics import JointState, PlantParams, mass_matrix, rk4_step_batch, wrap_angle

logger = logging.getLogger(__name__)

GOAL_STATE = np.array([np.pi, 0.0, 0.0, 0.0])


def linearize_at_goal(params: PlantParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    连续时间线性化 ẋ = A x + B u, 工作点 ([π, 0], [0, 0]), u = 0

    工作点处 B u - n = 0, 所以只有重力与阻尼项的雅可比进入 A。
    """
    m_inv = np.linalg.inv(mass_matrix(GOAL_STATE[:2], params))
    a = params.m2 * params.r2 * params.g
    b = (params.m1 * params.r1 + params.m2 * params.l1) * params.g
    # ∂g/∂q 在 q1 = π, q2 = 0 处
    dg = -np.array([[b + a, a], [a, a]])
    damping = np.diag([params.b1, params.b2])

    A = np.zeros((4, 4))
    A[:2, 2:] = np.eye(2)
    A[2:, :2] = -m_inv @ dg
    A[2:, 2:] = -m_inv @ damping
    B = np.zeros(4)
    B[2:] = m_inv @ params.actuation_vector()
    return A, B


def riccati_residual(A, B, Q, R, S) -> np.ndarray:
    """AᵀS + SA - S B R⁻¹ Bᵀ S + Q"""
    B = np.asarray(B, dtype=float).reshape(len(A), -1)
    R = np.atleast_2d(R)
    return A.T @ S + S @ A - S @ B @ np.linalg.solve(R, B.T @ S) + Q


def lqr_gain(
    A,
    B,
    Q,
    R: float = 1.0,
    tolerance: float = 1e-10,
    max_iterations: int = 50,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    连续时间LQR: 先用scipy求CARE, 再做Newton–Kleinman迭代细化

    收敛判据为相对残差 ‖Res‖_F / max(1, ‖Q‖_F, ‖AᵀS‖_F) < tolerance;
    未收敛抛出 RiccatiError (带残差范数)。返回 (K 行向量, S)。
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    n = A.shape[0]
    B = np.asarray(B, dtype=float).reshape(n, 1)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    R = float(R)
    if R <= 0:
        raise ValueError("R 必须为正")

    try:
        S = linalg.solve_continuous_are(A, B, Q, np.array([[R]]))
    except (linalg.LinAlgError, ValueError) as e:
        raise RiccatiError(float("inf"), 0) from e

    def relative(S_):
        res = riccati_residual(A, B, Q, R, S_)
        scale = max(1.0, np.linalg.norm(Q), np.linalg.norm(A.T @ S_))
        return np.linalg.norm(res) / scale, np.linalg.norm(res)

    rel, absolute = relative(S)
    iterations = 0
    while rel >= tolerance and iterations < max_iterations:
        K = (B.T @ S) / R
        closed = A - B @ K
        S_next = linalg.solve_continuous_lyapunov(closed.T, -(Q + K.T @ K * R))
        S_next = 0.5 * (S_next + S_next.T)
        rel_next, abs_next = relative(S_next)
        iterations += 1
        if rel_next >= rel:
            break
        S, rel, absolute = S_next, rel_next, abs_next

    if rel >= tolerance:
        raise RiccatiError(float(absolute), iterations)
    K = (B.T @ S).ravel() / R
    eig = np.linalg.eigvals(A - B @ K[None, :])
    if np.any(eig.real >= 0):
        raise RiccatiError(float(absolute), iterations)
    logger.debug("✅ Riccati收敛, 细化 %d 次, 残差 %.2e", iterations, absolute)
    return K, S


@dataclass(frozen=True)
class LqrStabilizer:
    """u = -K e, 吸引域近似为 {e : eᵀ S e < ρ}"""
    K: np.ndarray
    S: np.ndarray
    rho: float
    Q: np.ndarray = field(default_factory=lambda: np.diag([10.0, 10.0, 1.0, 1.0]))
    R: float = 1.0

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("ρ 必须为正")

    def value(self, state: JointState) -> float:
        e = state_error(state)
        return float(e @ self.S @ e)

    def torque(self, state: JointState) -> float:
        return float(-self.K @ state_error(state))

    def with_rho(self, rho: float) -> "LqrStabilizer":
        return LqrStabilizer(self.K, self.S, rho, self.Q, self.R)

    def to_dict(self) -> dict:
        return {
            "K": self.K.tolist(),
            "S": self.S.tolist(),
            "rho": self.rho,
            "Q": np.asarray(self.Q).tolist(),
            "R": self.R,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LqrStabilizer":
        return cls(
            np.asarray(data["K"], dtype=float),
            np.asarray(data["S"], dtype=float),
            float(data["rho"]),
            np.asarray(data["Q"], dtype=float),
            float(data["R"]),
        )


def state_error(state: JointState) -> np.ndarray:
    """到 [π, 0, 0, 0] 的误差, 角度分量已包裹"""
    return np.concatenate([wrap_angle(state.q - GOAL_STATE[:2]), state.qd])


def in_roa(state: JointState, lqr: LqrStabilizer) -> bool:
    return lqr.value(state) < lqr.rho


def design_lqr(
    params: PlantParams,
    q_weights: Sequence[float] = (10.0, 10.0, 1.0, 1.0),
    r_weight: float = 1.0,
    rho: float = 1.0,
) -> LqrStabilizer:
    A, B = linearize_at_goal(params)
    Q = np.diag(np.asarray(q_weights, dtype=float))
    K, S = lqr_gain(A, B, Q, r_weight)
    return LqrStabilizer(K, S, rho, Q, r_weight)


def sample_sublevel_states(lqr: LqrStabilizer, rho: float, n: int, rng: np.random.Generator) -> np.ndarray:
    """在椭球 eᵀSe < ρ 内均匀采样误差向量 (n, 4)"""
    z = rng.standard_normal((n, 4))
    norms = np.sqrt(np.einsum("ni,ij,nj->n", z, lqr.S, z))
    radius = np.sqrt(rho) * rng.uniform(0.0, 1.0, n) ** 0.25
    return z / norms[:, None] * radius[:, None]


def lqr_convergence_rate(
    params: PlantParams,
    lqr: LqrStabilizer,
    errors: np.ndarray,
    duration: float = 5.0,
    sim_dt: float = 0.002,
    substeps: int = 10,
    tolerance: float = 1e-2,
) -> float:
    """批量闭环仿真 (50 Hz零阶保持), 返回收敛到目标的比例"""
    x = GOAL_STATE[None, :] + errors
    q, qd = x[:, :2].copy(), x[:, 2:].copy()
    limit = params.torque_limit
    n_ticks = int(round(duration / (sim_dt * substeps)))
    for _ in range(n_ticks):
        e = np.concatenate([wrap_angle(q - GOAL_STATE[:2]), qd], axis=1)
        u = np.clip(-e @ lqr.K, -limit, limit)
        for _ in range(substeps):
            q, qd = rk4_step_batch(q, qd, u, sim_dt, params)
        bad = ~np.all(np.isfinite(qd), axis=1)
        q[bad], qd[bad] = 0.0, 0.0
    e = np.concatenate([wrap_angle(q - GOAL_STATE[:2]), qd], axis=1)
    return float(np.mean(np.linalg.norm(e, axis=1) < tolerance))


def calibrate_roa(
    params: PlantParams,
    lqr: LqrStabilizer,
    candidates: Optional[Sequence[float]] = None,
    n_samples: int = 100,
    success: float = 0.95,
    seed: int = 0,
    duration: float = 5.0,
) -> float:
    """取满足 ≥success 比例收敛的最大候选 ρ"""
    if candidates is None:
        candidates = np.geomspace(1e-2, 1e2, 9)
    rng = np.random.default_rng(seed)
    best = None
    for rho in sorted(candidates):
        errors = sample_sublevel_states(lqr, rho, n_samples, rng)
        rate = lqr_convergence_rate(params, lqr, errors, duration)
        logger.info("📊 ρ=%.3g 收敛比例 %.2f", rho, rate)
        if rate >= success:
            best = float(rho)
        else:
            break
    if best is None:
        best = float(min(candidates))
        logger.warning("⚠️ 没有候选ρ达到 %.0f%% 收敛, 使用最小候选 %.3g", success * 100, best)
    return best


def save_lqr(path, lqr: LqrStabilizer):
    return write_json(path, lqr.to_dict(), kind="lqr_stabilizer")


def load_lqr(path) -> LqrStabilizer:
    return LqrStabilizer.from_dict(read_json(path, kind="lqr_stabilizer"))
