#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : gp_model.py
@Time    : 2025年08月05日 10:30:00
@Author  : 宝总
@Version : 1.0
@Desc    : 速度积分GP动力学模型

每个自由度的速度增量 Δ⁽ⁱ⁾ 由独立GP建模, 先验均值取名义正向动力学乘以采样时间,
GP只学习残差。输入为原始 x̃ = [q1, q2, qd1, qd2, u]。
"""

import logging
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg, optimize

from core.artifacts import read_json, write_csv, write_json
from core.exceptions import ConvergenceWarning, FactorizationError
from engine.autodiff import fixed_quad_form, se_cross_kernel
from plant.dynamics import JointState, PlantParams, forward_dynamics_batch, rk4_step_batch

logger = logging.getLogger(__name__)

INPUT_DIM = 5
NOISE_FLOOR = 1e-8
MAX_JITTER = 1e-6
VARIANCE_TOLERANCE = 1e-10

DATASET_COLUMNS = ["q1", "q2", "qd1", "qd2", "u", "dv1", "dv2"]


@dataclass(frozen=True)
class GpDataset:
    """GP训练集: 输入 (n, 5), 目标为原始速度增量 (n, 2)"""
    inputs: np.ndarray
    targets: np.ndarray
    sampling_time: float

    def __post_init__(self):
        inputs = np.asarray(self.inputs, dtype=float).reshape(-1, INPUT_DIM)
        targets = np.asarray(self.targets, dtype=float).reshape(-1, 2)
        if len(inputs) != len(targets):
            raise ValueError(f"输入 {len(inputs)} 行与目标 {len(targets)} 行不一致")
        if self.sampling_time <= 0:
            raise ValueError("采样时间必须为正")
        object.__setattr__(self, "inputs", inputs)
        object.__setattr__(self, "targets", targets)

    def __len__(self) -> int:
        return len(self.inputs)

    @classmethod
    def empty(cls, sampling_time: float) -> "GpDataset":
        return cls(np.zeros((0, INPUT_DIM)), np.zeros((0, 2)), sampling_time)

    def append(self, other: "GpDataset") -> "GpDataset":
        if not np.isclose(other.sampling_time, self.sampling_time):
            raise ValueError("采样时间不同的数据集不能合并")
        return GpDataset(
            np.vstack([self.inputs, other.inputs]),
            np.vstack([self.targets, other.targets]),
            self.sampling_time,
        )

    def take(self, indices) -> "GpDataset":
        return GpDataset(self.inputs[indices], self.targets[indices], self.sampling_time)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(np.hstack([self.inputs, self.targets]), columns=DATASET_COLUMNS)

    def to_csv(self, path):
        return write_csv(path, self.to_frame())

    @classmethod
    def from_csv(cls, path, sampling_time: float) -> "GpDataset":
        frame = pd.read_csv(path)
        missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"数据集CSV缺少列: {missing}")
        data = frame[DATASET_COLUMNS].to_numpy(dtype=float)
        return cls(data[:, :INPUT_DIM], data[:, INPUT_DIM:], sampling_time)


@dataclass(frozen=True)
class KernelHyp:
    """单个自由度的平方指数核超参数"""
    lengthscales: np.ndarray
    signal_var: float
    noise_var: float

    def __post_init__(self):
        ls = np.asarray(self.lengthscales, dtype=float).reshape(INPUT_DIM)
        if np.any(ls <= 0) or self.signal_var <= 0 or self.noise_var <= 0:
            raise ValueError("核超参数必须全部为正")
        object.__setattr__(self, "lengthscales", ls)

    @property
    def inv_lengthscale2(self) -> np.ndarray:
        return 1.0 / self.lengthscales ** 2

    def to_log(self) -> np.ndarray:
        return np.concatenate([np.log(self.lengthscales), [np.log(self.signal_var), np.log(self.noise_var)]])

    @classmethod
    def from_log(cls, theta: np.ndarray) -> "KernelHyp":
        theta = np.asarray(theta, dtype=float)
        return cls(np.exp(theta[:INPUT_DIM]), float(np.exp(theta[INPUT_DIM])),
                   float(max(np.exp(theta[INPUT_DIM + 1]), NOISE_FLOOR)))

    def to_dict(self) -> dict:
        return {
            "lengthscales": self.lengthscales.tolist(),
            "signal_var": self.signal_var,
            "noise_var": self.noise_var,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "KernelHyp":
        return cls(np.asarray(data["lengthscales"]), float(data["signal_var"]), float(data["noise_var"]))


DEFAULT_HYP = KernelHyp(np.ones(INPUT_DIM), 1.0, 1e-4)


@dataclass(frozen=True)
class GpModel:
    """
    不可变的GP模型

    只能通过 GpModel.build 构造, 分解与数据集/超参数始终一致。
    """
    dataset: GpDataset
    hyps: Tuple[KernelHyp, KernelHyp]
    params: PlantParams
    chol: Tuple[np.ndarray, np.ndarray]
    alpha: Tuple[np.ndarray, np.ndarray]
    jitter: Tuple[float, float] = (0.0, 0.0)

    @property
    def sampling_time(self) -> float:
        return self.dataset.sampling_time

    @classmethod
    def build(cls, dataset: GpDataset, hyps: Sequence[KernelHyp], params: PlantParams) -> "GpModel":
        """分解 Γ_i = K + σ_i² I 并预计算 α_i = Γ_i⁻¹ (y - m(X))"""
        hyps = tuple(hyps)
        if len(hyps) != 2:
            raise ValueError("需要两个自由度的超参数")
        residual = dataset.targets - prior_mean_batch(dataset.inputs, params, dataset.sampling_time)
        chols, alphas, jitters = [], [], []
        for i, hyp in enumerate(hyps):
            if len(dataset) == 0:
                chols.append(np.zeros((0, 0)))
                alphas.append(np.zeros(0))
                jitters.append(0.0)
                continue
            gram = se_kernel_matrix(dataset.inputs, dataset.inputs, hyp)
            gram[np.diag_indices_from(gram)] += max(hyp.noise_var, NOISE_FLOOR)
            chol, jitter = stable_cholesky(gram)
            chols.append(chol)
            jitters.append(jitter)
            alphas.append(linalg.cho_solve((chol, True), residual[:, i], check_finite=False))
        return cls(dataset, hyps, params, tuple(chols), tuple(alphas), tuple(jitters))

    def with_dataset(self, dataset: GpDataset) -> "GpModel":
        return GpModel.build(dataset, self.hyps, self.params)

    def to_dict(self) -> dict:
        return {
            "sampling_time": self.sampling_time,
            "variant": self.params.variant,
            "dataset_rows": len(self.dataset),
            "dofs": [hyp.to_dict() for hyp in self.hyps],
            "jitter": list(self.jitter),
        }


@dataclass
class GpPosterior:
    """批量后验: 均值/方差 (N, 2) 与被截断的负方差个数"""
    mean: np.ndarray
    var: np.ndarray
    clamped: int = 0


@dataclass
class HyperFitResult:
    """超参数拟合结果, converged=False 时返回的是最优迭代"""
    hyps: Tuple[KernelHyp, KernelHyp]
    converged: Tuple[bool, bool]
    log_marginal_likelihood: Tuple[float, float]
    iterations: Tuple[int, int]
    messages: List[str] = field(default_factory=list)

    @property
    def all_converged(self) -> bool:
        return all(self.converged)


@dataclass
class StatePrediction:
    """一步预测的高斯分布, 状态顺序 [q1, q2, qd1, qd2]"""
    mean: np.ndarray
    cov: np.ndarray

    def mean_state(self) -> JointState:
        return JointState.from_vector(self.mean)


# ---------------------------------------------------------------- 核函数与先验均值

def se_kernel(a, b, hyp: KernelHyp) -> float:
    """k(a, b) = σ_f² exp(-½ Σ_d (a_d - b_d)² / ℓ_d²)"""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return float(hyp.signal_var * np.exp(-0.5 * np.sum(diff * diff * hyp.inv_lengthscale2)))


def se_kernel_matrix(x, points, hyp: KernelHyp):
    """交叉核矩阵 K(x, points), x 可为 Var"""
    return se_cross_kernel(x, np.asarray(points, dtype=float), hyp.inv_lengthscale2, hyp.signal_var)


def stable_cholesky(matrix: np.ndarray) -> Tuple[np.ndarray, float]:
    """下三角Cholesky; 失败时逐级加抖动直到 MAX_JITTER"""
    jitter = 0.0
    scale = max(float(np.mean(np.diag(matrix))), 1.0)
    while True:
        try:
            shifted = matrix if jitter == 0.0 else matrix + jitter * scale * np.eye(len(matrix))
            return linalg.cholesky(shifted, lower=True, check_finite=False), jitter
        except linalg.LinAlgError:
            jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
            if jitter > MAX_JITTER:
                raise FactorizationError("Cholesky分解失败, 已达最大抖动", jitter=MAX_JITTER)
            logger.warning("⚠️ Cholesky失败, 抖动增加到 %.1e", jitter)


def gp_inputs(q, qd, u):
    """拼接GP输入 x̃ = [q, qd, u], 支持批量与Var"""
    return np.concatenate([q, qd, np.reshape(u, (-1, 1))], axis=1)


def prior_mean_batch(inputs, params: PlantParams, sampling_time: float):
    """m_Δ(x̃) = T_s · M(q)⁻¹ (B u - n(q, qd)), 输入形状 (N, 5)"""
    if sampling_time <= 0:
        raise ValueError("采样时间必须为正")
    return sampling_time * forward_dynamics_batch(inputs[:, 0:2], inputs[:, 2:4], inputs[:, 4], params)


def prior_mean(x_tilde, params: PlantParams, sampling_time: float) -> np.ndarray:
    """单点先验均值 (rad/s)"""
    x = np.asarray(x_tilde, dtype=float).reshape(1, INPUT_DIM)
    return prior_mean_batch(x, params, sampling_time)[0]


def prior_mean_residual(
    inputs: np.ndarray,
    params: PlantParams,
    sampling_time: float,
    sim_dt: float = 0.002,
) -> np.ndarray:
    """先验均值与细步长RK4传播得到的真实速度增量之差 (N, 2)"""
    inputs = np.asarray(inputs, dtype=float).reshape(-1, INPUT_DIM)
    n_sub = max(int(round(sampling_time / sim_dt)), 1)
    h = sampling_time / n_sub
    q, qd, u = inputs[:, 0:2], inputs[:, 2:4], inputs[:, 4]
    q_t, qd_t = q.copy(), qd.copy()
    for _ in range(n_sub):
        q_t, qd_t = rk4_step_batch(q_t, qd_t, u, h, params)
    true_delta = qd_t - qd
    return true_delta - prior_mean_batch(inputs, params, sampling_time)


# ---------------------------------------------------------------- 超参数拟合

def log_marginal_likelihood(inputs: np.ndarray, residual: np.ndarray, hyp: KernelHyp):
    """
    残差目标在零均值SE-GP下的对数边际似然及其对 log 参数的梯度

    log 参数顺序: log ℓ (5), log σ_f², log σ_n²
    """
    n = len(inputs)
    gram = se_kernel_matrix(inputs, inputs, hyp)
    noise = max(hyp.noise_var, NOISE_FLOOR)
    chol, _ = stable_cholesky(gram + noise * np.eye(n))
    alpha = linalg.cho_solve((chol, True), residual, check_finite=False)
    lml = -0.5 * residual @ alpha - np.sum(np.log(np.diag(chol))) - 0.5 * n * np.log(2.0 * np.pi)

    inv = linalg.cho_solve((chol, True), np.eye(n), check_finite=False)
    weight = np.outer(alpha, alpha) - inv
    grad = np.empty(INPUT_DIM + 2)
    for d in range(INPUT_DIM):
        sq = (inputs[:, d][:, None] - inputs[:, d][None, :]) ** 2
        grad[d] = 0.5 * np.sum(weight * gram * sq * hyp.inv_lengthscale2[d])
    grad[INPUT_DIM] = 0.5 * np.sum(weight * gram)
    grad[INPUT_DIM + 1] = 0.5 * noise * np.trace(weight)
    return float(lml), grad


def _initial_guesses(inputs: np.ndarray, residual: np.ndarray) -> List[KernelHyp]:
    """两个初始化: 单位长度尺度; 按输入标准差缩放的长度尺度"""
    signal = max(float(np.var(residual)), 1e-6)
    noise = max(0.01 * signal, 10.0 * NOISE_FLOOR)
    scaled = np.std(inputs, axis=0)
    scaled = np.where(scaled > 1e-6, scaled, 1.0)
    return [
        KernelHyp(np.ones(INPUT_DIM), signal, noise),
        KernelHyp(scaled, signal, noise),
    ]


def fit_dof_hyperparameters(
    inputs: np.ndarray,
    residual: np.ndarray,
    max_iterations: int = 500,
) -> Tuple[KernelHyp, bool, float, int, str]:
    """对单个自由度做两次起点的L-BFGS-B最大化对数边际似然"""
    bounds = [(np.log(1e-3), np.log(1e3))] * INPUT_DIM + [
        (np.log(1e-12), np.log(1e6)),
        (np.log(NOISE_FLOOR), np.log(1e4)),
    ]

    def objective(theta):
        try:
            value, grad = log_marginal_likelihood(inputs, residual, KernelHyp.from_log(theta))
        except FactorizationError:
            return 1e25, np.zeros_like(theta)
        return -value, -grad

    best = None
    for guess in _initial_guesses(inputs, residual):
        result = optimize.minimize(
            objective,
            guess.to_log(),
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": max_iterations},
        )
        if best is None or result.fun < best.fun:
            best = result
    hyp = KernelHyp.from_log(best.x)
    return hyp, bool(best.success), float(-best.fun), int(best.nit), str(best.message)


def fit_hyperparameters(
    dataset: GpDataset,
    params: PlantParams,
    max_iterations: int = 500,
) -> HyperFitResult:
    """对两个自由度分别拟合核超参数 (目标减去先验均值后)"""
    if len(dataset) < 10:
        raise ValueError(f"拟合超参数至少需要10个样本, 当前 {len(dataset)}")
    residual = dataset.targets - prior_mean_batch(dataset.inputs, params, dataset.sampling_time)

    hyps, converged, lmls, iterations, messages = [], [], [], [], []
    for i in range(2):
        hyp, ok, lml, nit, message = fit_dof_hyperparameters(dataset.inputs, residual[:, i], max_iterations)
        hyps.append(hyp)
        converged.append(ok)
        lmls.append(lml)
        iterations.append(nit)
        messages.append(f"dof{i + 1}: {message}")
        if not ok:
            warnings.warn(f"自由度{i + 1}的超参数拟合未收敛: {message}", ConvergenceWarning)
            logger.warning("⚠️ 自由度%d超参数未收敛 (%d次迭代), 使用最优迭代", i + 1, nit)
        else:
            logger.info("✅ 自由度%d超参数拟合完成, log ML = %.3f", i + 1, lml)
    return HyperFitResult(tuple(hyps), tuple(converged), tuple(lmls), tuple(iterations), messages)


def save_hyperparameters(path, hyps: Sequence[KernelHyp], sampling_time: float, extra: Optional[dict] = None):
    payload = {"sampling_time": sampling_time, "dofs": [h.to_dict() for h in hyps]}
    if extra:
        payload.update(extra)
    return write_json(path, payload, kind="gp_hyperparameters")


def load_hyperparameters(path) -> Tuple[Tuple[KernelHyp, KernelHyp], float]:
    document = read_json(path, kind="gp_hyperparameters")
    hyps = tuple(KernelHyp.from_dict(d) for d in document["dofs"])
    return hyps, float(document["sampling_time"])


# ---------------------------------------------------------------- 后验与预测

def subset_of_data(dataset: GpDataset, max_n: int) -> GpDataset:
    """Subset of Data: 保留最近的 max_n 个样本, 顺序不变"""
    if max_n < 1:
        raise ValueError("max_n 必须 ≥ 1")
    if len(dataset) <= max_n:
        return dataset
    return dataset.take(np.arange(len(dataset) - max_n, len(dataset)))


def delta_moments(model: GpModel, inputs):
    """
    速度增量后验的均值与方差 (未截断), 可对Var输入求导

    返回 (mean, var), 形状均为 (N, 2)
    """
    prior = prior_mean_batch(inputs, model.params, model.sampling_time)
    means, variances = [], []
    for i, hyp in enumerate(model.hyps):
        if len(model.dataset) == 0:
            means.append(prior[:, i])
            variances.append(np.full(len(inputs), hyp.signal_var))
            continue
        k = se_kernel_matrix(inputs, model.dataset.inputs, hyp)
        means.append(prior[:, i] + k @ model.alpha[i])
        variances.append(hyp.signal_var - fixed_quad_form(k, model.chol[i]))
    return np.stack(means, axis=-1), np.stack(variances, axis=-1)


def posterior_batch(model: GpModel, inputs) -> GpPosterior:
    """批量后验, 负方差截断为0并计数"""
    inputs = np.asarray(inputs, dtype=float).reshape(-1, INPUT_DIM)
    mean, var = delta_moments(model, inputs)
    negative = var < 0
    clamped = int(np.count_nonzero(negative))
    if clamped:
        significant = int(np.count_nonzero(var < -VARIANCE_TOLERANCE))
        logger.debug("📊 后验方差截断 %d 个 (超出容差 %d 个)", clamped, significant)
    return GpPosterior(mean, np.where(negative, 0.0, var), clamped)


def posterior(model: GpModel, x_tilde) -> Tuple[np.ndarray, np.ndarray]:
    """单点后验 (均值, 方差), 各为2维"""
    result = posterior_batch(model, x_tilde)
    return result.mean[0], result.var[0]


def one_step_predict(state: JointState, u: float, model: GpModel) -> StatePrediction:
    """速度积分模型的一步高斯预测, 位置协方差经线性映射精确传播"""
    ts = model.sampling_time
    mean_delta, var_delta = posterior(model, gp_inputs(state.q[None, :], state.qd[None, :], np.array([u]))[0])
    q_next = state.q + ts * state.qd + 0.5 * ts * mean_delta
    qd_next = state.qd + mean_delta
    cov = np.zeros((4, 4))
    for i in range(2):
        v = var_delta[i]
        cov[i, i] = 0.25 * ts * ts * v
        cov[i, i + 2] = cov[i + 2, i] = 0.5 * ts * v
        cov[i + 2, i + 2] = v
    return StatePrediction(np.concatenate([q_next, qd_next]), cov)


def sample_next_batch(q, qd, u, model: GpModel, noise):
    """
    重参数化采样: Δ = μ + sqrt(max(σ², 0)) ⊙ ε, 再按速度积分更新

    noise 形状 (N, 2), 由调用方提供; q/qd/u 可为Var
    """
    ts = model.sampling_time
    mean, var = delta_moments(model, gp_inputs(q, qd, u))
    delta = mean + np.sqrt(np.maximum(var, 0.0)) * noise
    q_next = q + ts * qd + (0.5 * ts) * delta
    qd_next = qd + delta
    return q_next, qd_next


def sample_next_state(state: JointState, u: float, model: GpModel, noise) -> JointState:
    """单状态重参数化采样"""
    q_next, qd_next = sample_next_batch(
        state.q[None, :], state.qd[None, :], np.array([float(u)]), model,
        np.asarray(noise, dtype=float).reshape(1, 2),
    )
    return JointState(q_next[0], qd_next[0])


def build_model(dataset: GpDataset, hyps: Sequence[KernelHyp], params: PlantParams) -> GpModel:
    return GpModel.build(dataset, hyps, params)
