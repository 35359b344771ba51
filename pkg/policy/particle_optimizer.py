#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : particle_optimizer.py
@Time    : 2025年08月06日 14:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 粒子蒙特卡洛代价估计与基于重参数化梯度的策略优化

Ĵ = Σ_{t=0..T} (1/N) Σ_n c(x_t⁽ⁿ⁾), 粒子经 GP 重参数化采样传播;
梯度由 engine.autodiff 在整条粒子轨迹上反向求得。
"""

import logging
from dataclasses import dataclass
from typing import Callable, Optional, Tuple, Union

import numpy as np
import pandas as pd

from core.artifacts import write_csv
from core.config import OptimizerConfig
from engine.autodiff import Var, record_and_grad
from models.gp_model import GpModel, sample_next_batch
from plant.dynamics import wrap_angle

from .rbf_policy import PolicyParams, apply_dropout, dropout_mask, policy_eval_batch

logger = logging.getLogger(__name__)

GOAL_Q = np.array([np.pi, 0.0])
COST_HISTORY_COLUMNS = ["step", "J_hat", "lr", "dropout_rate"]

SeedLike = Union[int, np.random.SeedSequence, None]


def _seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    return seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)


def _value(x):
    return x.value if isinstance(x, Var) else np.asarray(x)


@dataclass(frozen=True)
class InitialDistribution:
    """均匀初始分布 U(-x_M⊙γ, x_M⊙γ), 状态顺序 [q1, q2, qd1, qd2]"""
    x_max: np.ndarray
    gamma: float = 1.0

    def __post_init__(self):
        x_max = np.asarray(self.x_max, dtype=float).reshape(4)
        if np.any(x_max < 0):
            raise ValueError("x_M 必须非负")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("γ 必须在 [0, 1] 内")
        object.__setattr__(self, "x_max", x_max)

    @property
    def half_widths(self) -> np.ndarray:
        return self.x_max * self.gamma

    @classmethod
    def nominal(cls, epsilon: float = 0.005) -> "InitialDistribution":
        return cls(np.array([np.pi, np.pi, epsilon, epsilon]), 1.0)


@dataclass
class ParticleBatch:
    """一次粒子仿真的完整记录"""
    states: np.ndarray  # (N, T+1, 4)
    torques: np.ndarray  # (N, T)
    noise: np.ndarray  # (N, T, 2)
    diverged: np.ndarray  # (N,)
    step_costs: np.ndarray  # (T+1,)

    @property
    def n_particles(self) -> int:
        return self.states.shape[0]

    @property
    def diverged_count(self) -> int:
        return int(np.count_nonzero(self.diverged))


@dataclass
class OptimizationResult:
    """策略优化结果与计数器"""
    params: PolicyParams
    history: pd.DataFrame
    best_step: int = -1
    best_smoothed_cost: float = float("inf")
    rejected_steps: int = 0
    exit_reason: str = "max_steps"
    final_learning_rate: float = 0.0

    @property
    def costs(self) -> np.ndarray:
        return self.history["J_hat"].to_numpy()


# ---------------------------------------------------------------- 代价与初始粒子

def saturated_cost_batch(q, length_scale: float = 3.0):
    """c = 1 - exp(-‖|wrap(q)| - q_G‖² / ℓ_c), q 形状 (..., 2), 可为Var"""
    if length_scale <= 0:
        raise ValueError("ℓ_c 必须为正")
    err = np.absolute(wrap_angle(q)) - GOAL_Q
    return 1.0 - np.exp(-np.sum(err * err, axis=-1) / length_scale)


def saturated_cost(state, length_scale: float = 3.0) -> float:
    """单状态饱和代价, 取值 [0, 1)"""
    q = state.q if hasattr(state, "q") else np.asarray(state, dtype=float)[:2]
    return float(saturated_cost_batch(np.asarray(q, dtype=float), length_scale))


def sample_initial_particles(dist: InitialDistribution, n: int, seed: SeedLike) -> np.ndarray:
    """每个粒子使用独立派生的随机流, 返回 (N, 4)"""
    if n < 1:
        raise ValueError("粒子数必须 ≥ 1")
    h = dist.half_widths
    children = _seed_sequence(seed).spawn(n)
    return np.stack([np.random.default_rng(c).uniform(-h, h) for c in children])


def particle_noise(n: int, horizon: int, seed: SeedLike) -> np.ndarray:
    """(N, T, 2) 标准正态噪声, 每个粒子一条独立随机流"""
    children = _seed_sequence(seed).spawn(n)
    return np.stack([np.random.default_rng(c).standard_normal((horizon, 2)) for c in children])


def rollout_seeds(seed: SeedLike) -> Tuple[np.random.SeedSequence, np.random.SeedSequence]:
    """把一次rollout的种子拆成 (初始状态, 过程噪声) 两条流"""
    init_seq, noise_seq = _seed_sequence(seed).spawn(2)
    return init_seq, noise_seq


# ---------------------------------------------------------------- 粒子仿真

def simulate_particles(
    model: GpModel,
    params: PolicyParams,
    x0: np.ndarray,
    noise: np.ndarray,
    length_scale: float = 3.0,
    divergence_ceiling: float = 50.0,
    record: bool = False,
):
    """
    沿时域传播粒子并累计平均代价, params 可含Var

    发散粒子 (|qd| 超限或非有限) 冻结在最后一个有限状态, 剩余步代价固定为1。
    返回 (Ĵ, batch 或 None)。
    """
    x0 = np.asarray(x0, dtype=float)
    n, horizon = noise.shape[0], noise.shape[1]
    q, qd = x0[:, :2], x0[:, 2:]
    diverged = np.zeros(n, dtype=bool)

    step_cost = np.mean(saturated_cost_batch(q, length_scale))
    total = step_cost
    step_costs = [float(_value(step_cost))]
    states = [np.concatenate([_value(q), _value(qd)], axis=1)] if record else None
    torques = [] if record else None

    for t in range(horizon):
        u = policy_eval_batch(params, q, qd)
        q_next, qd_next = sample_next_batch(q, qd, u, model, noise[:, t])
        qd_raw = _value(qd_next)
        blown = ~np.all(np.isfinite(qd_raw), axis=1) | ~np.all(np.isfinite(_value(q_next)), axis=1)
        blown |= np.any(np.abs(np.nan_to_num(qd_raw, nan=np.inf)) > divergence_ceiling, axis=1)
        newly = blown & ~diverged
        diverged = diverged | blown
        if newly.any():
            logger.debug("⚠️ 第%d步 %d 个粒子发散", t + 1, int(newly.sum()))
        hold = diverged[:, None]
        q = np.where(hold, q, q_next)
        qd = np.where(hold, qd, qd_next)
        cost = np.where(diverged, 1.0, saturated_cost_batch(q, length_scale))
        step_cost = np.mean(cost)
        total = total + step_cost
        step_costs.append(float(_value(step_cost)))
        if record:
            torques.append(np.asarray(_value(u), dtype=float))
            states.append(np.concatenate([_value(q), _value(qd)], axis=1))

    if not record:
        return total, None
    batch = ParticleBatch(
        states=np.stack(states, axis=1),
        torques=np.stack(torques, axis=1) if torques else np.zeros((n, 0)),
        noise=np.asarray(noise, dtype=float),
        diverged=diverged,
        step_costs=np.asarray(step_costs),
    )
    return total, batch


def rollout_particles(
    model: GpModel,
    params: PolicyParams,
    dist: InitialDistribution,
    config: OptimizerConfig,
    seed: SeedLike,
) -> Tuple[ParticleBatch, float]:
    """从初始分布采样N个粒子, 在GP模型中仿真T步, 返回 (batch, Ĵ)"""
    horizon = config.horizon_steps(model.sampling_time)
    init_seq, noise_seq = rollout_seeds(seed)
    x0 = sample_initial_particles(dist, config.n_particles, init_seq)
    noise = particle_noise(config.n_particles, horizon, noise_seq)
    total, batch = simulate_particles(
        model, params, x0, noise,
        length_scale=config.cost_length_scale,
        divergence_ceiling=config.divergence_ceiling,
        record=True,
    )
    if batch.diverged_count:
        logger.info("📊 %d/%d 个粒子发散", batch.diverged_count, batch.n_particles)
    return batch, float(total)


def rollout_objective(
    model: GpModel,
    x0: np.ndarray,
    noise: np.ndarray,
    config: OptimizerConfig,
    mask: Optional[np.ndarray] = None,
) -> Callable[[PolicyParams], object]:
    """构造 params → Ĵ 的目标函数, dropout掩码在闭包内固定"""
    def objective(params: PolicyParams):
        if mask is not None:
            params = apply_dropout(params, 0.0, mask=mask)
        total, _ = simulate_particles(
            model, params, x0, noise,
            length_scale=config.cost_length_scale,
            divergence_ceiling=config.divergence_ceiling,
        )
        return total
    return objective


# ---------------------------------------------------------------- 优化器

class AdamState:
    """逐参数自适应步长 (动量 + 二阶矩归一化)"""

    def __init__(self, size: int, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps

    def step(self, grad: np.ndarray, lr: float) -> np.ndarray:
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * grad * grad
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return -lr * m_hat / (np.sqrt(v_hat) + self.eps)


def moving_average(values: np.ndarray, window: int) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if len(values) < window:
        return np.zeros(0)
    kernel = np.ones(window) / window
    return np.convolve(values, kernel, mode="valid")


def exit_condition_met(costs, window: int, span: int, tolerance: float) -> bool:
    """滑动平均在 span 步内的相对改进低于 tolerance 时停止"""
    smoothed = moving_average(costs, window)
    if len(smoothed) <= span:
        return False
    old, new = smoothed[-1 - span], smoothed[-1]
    if old <= 0:
        return True
    return (old - new) / abs(old) < tolerance


def clip_gradient(grad: np.ndarray, max_norm: Optional[float]) -> np.ndarray:
    if max_norm is None:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad


def optimize_policy(
    model: Optional[GpModel],
    params: PolicyParams,
    dist: InitialDistribution,
    config: OptimizerConfig,
    seed: SeedLike,
    objective: Optional[Callable] = None,
) -> OptimizationResult:
    """
    Adam式随机梯度下降最小化 Ĵ

    每步使用新的初始粒子、过程噪声与dropout掩码; 返回滑动平均代价最低时的参数。
    objective(params, step_seed) 可替换粒子目标 (用于已知凸函数的测试)。
    """
    theta = params.flatten()
    adam = AdamState(theta.size, config.beta1, config.beta2)
    lr = config.learning_rate
    horizon = None if model is None else config.horizon_steps(model.sampling_time)

    rows = []
    best_theta = theta.copy()
    best_smoothed = float("inf")
    best_step = -1
    rejected = 0
    exit_reason = "max_steps"
    step_seeds = _seed_sequence(seed).spawn(config.max_steps) if config.max_steps else []

    for step, step_seed in enumerate(step_seeds):
        current = params.unflatten(theta)
        if objective is not None:
            value, grad = record_and_grad(lambda p: objective(p, step_seed), current)
        else:
            init_seq, noise_seq, mask_seq = step_seed.spawn(3)
            x0 = sample_initial_particles(dist, config.n_particles, init_seq)
            noise = particle_noise(config.n_particles, horizon, noise_seq)
            mask = None
            if config.dropout_rate > 0:
                mask = dropout_mask(current.n_basis, config.dropout_rate, np.random.default_rng(mask_seq))
            value, grad = record_and_grad(rollout_objective(model, x0, noise, config, mask), current)

        if not np.isfinite(value) or not np.all(np.isfinite(grad)):
            rejected += 1
            lr *= 0.5
            logger.warning("⚠️ 第%d步梯度非有限, 拒绝该步, 学习率减半为 %.2e", step, lr)
            rows.append((step, value, lr, config.dropout_rate))
            continue

        rows.append((step, value, lr, config.dropout_rate))
        evaluated = theta
        grad = clip_gradient(grad, config.grad_clip)
        theta = theta + adam.step(grad, lr)

        costs = np.array([r[1] for r in rows if np.isfinite(r[1])])
        smoothed = moving_average(costs, min(config.exit_window, len(costs)))
        if len(smoothed) and smoothed[-1] < best_smoothed:
            best_smoothed = float(smoothed[-1])
            best_theta = evaluated.copy()
            best_step = step
        if exit_condition_met(costs, config.exit_window, config.exit_span, config.exit_tolerance):
            exit_reason = "converged"
            logger.info("✅ 第%d步满足退出条件, 平滑代价 %.4f", step, smoothed[-1])
            break

    history = pd.DataFrame(rows, columns=COST_HISTORY_COLUMNS)
    if not rows:
        return OptimizationResult(params, history, exit_reason="no_steps", final_learning_rate=lr)
    if exit_reason == "max_steps":
        logger.info("📊 达到最大步数 %d, 返回最优平滑代价 %.4f", config.max_steps, best_smoothed)
    return OptimizationResult(
        params=params.unflatten(best_theta) if best_step >= 0 else params,
        history=history,
        best_step=best_step,
        best_smoothed_cost=best_smoothed,
        rejected_steps=rejected,
        exit_reason=exit_reason,
        final_learning_rate=lr,
    )


def save_cost_history(path, history: pd.DataFrame):
    return write_csv(path, history[COST_HISTORY_COLUMNS])
