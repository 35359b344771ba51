#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : test_gp_model.py
@Time    : 2025年08月12日 11:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : GP动力学模型测试 - 稠密求解对照, 一步预测, 超参数拟合, Subset of Data
"""

import logging

import numpy as np
import pytest

from core.exceptions import FactorizationError
from models.gp_model import (
    NOISE_FLOOR,
    GpDataset,
    KernelHyp,
    build_model,
    fit_hyperparameters,
    load_hyperparameters,
    one_step_predict,
    posterior,
    posterior_batch,
    prior_mean_batch,
    sample_next_batch,
    sample_next_state,
    save_hyperparameters,
    se_kernel,
    se_kernel_matrix,
    stable_cholesky,
    subset_of_data,
)
from plant.dynamics import JointState

logger = logging.getLogger(__name__)


def dense_oracle(inputs, targets, query, hyp, params, ts, dof):
    """逐项构造核矩阵并用稠密线性求解计算后验"""
    def k(a, b):
        d = a[:, None, :] - b[None, :, :]
        return hyp.signal_var * np.exp(-0.5 * np.sum(d * d / hyp.lengthscales ** 2, axis=-1))

    gamma = k(inputs, inputs) + hyp.noise_var * np.eye(len(inputs))
    resid = targets[:, dof] - prior_mean_batch(inputs, params, ts)[:, dof]
    kq = k(query, inputs)
    mean = prior_mean_batch(query, params, ts)[:, dof] + kq @ np.linalg.solve(gamma, resid)
    var = hyp.signal_var - np.einsum("ij,ji->i", kq, np.linalg.solve(gamma, kq.T))
    return mean, var


def test_posterior_matches_dense_solve(plant, rng, make_dataset):
    for _ in range(50):
        n = int(rng.integers(1, 51))
        data = make_dataset(rng, n)
        hyps = (
            KernelHyp(rng.uniform(0.5, 3.0, 5), rng.uniform(0.005, 0.05), rng.uniform(1e-4, 1e-3)),
            KernelHyp(rng.uniform(0.5, 3.0, 5), rng.uniform(0.005, 0.05), rng.uniform(1e-4, 1e-3)),
        )
        model = build_model(data, hyps, plant)
        query = make_dataset(rng, 20).inputs
        result = posterior_batch(model, query)
        for dof in range(2):
            mean, var = dense_oracle(data.inputs, data.targets, query, hyps[dof], plant, 0.02, dof)
            np.testing.assert_allclose(result.mean[:, dof], mean, rtol=1e-8, atol=1e-12)
            np.testing.assert_allclose(result.var[:, dof], var, rtol=1e-8, atol=1e-12)


def test_empty_dataset_recovers_prior(plant):
    hyp = KernelHyp(np.ones(5), 0.3, 1e-4)
    model = build_model(GpDataset.empty(0.02), (hyp, hyp), plant)
    x = np.array([0.4, -0.2, 1.0, 0.5, 0.7])
    mean, var = posterior(model, x)
    np.testing.assert_array_equal(mean, prior_mean_batch(x[None, :], plant, 0.02)[0])
    np.testing.assert_allclose(var, [0.3, 0.3])


def test_noiseless_interpolation(plant, rng, make_dataset):
    data = make_dataset(rng, 15)
    hyp = KernelHyp(np.full(5, 2.0), 0.01, NOISE_FLOOR)
    model = build_model(data, (hyp, hyp), plant)
    result = posterior_batch(model, data.inputs[:5])
    np.testing.assert_allclose(result.mean, data.targets[:5], atol=1e-4)
    assert np.all(result.var < 1e-6)


def test_se_kernel_properties(rng):
    hyp = KernelHyp(np.array([1.0, 2.0, 0.5, 1.5, 3.0]), 0.7, 1e-3)
    a, b = rng.standard_normal(5), rng.standard_normal(5)
    assert se_kernel(a, a, hyp) == pytest.approx(0.7)
    assert se_kernel(a, b, hyp) == pytest.approx(se_kernel(b, a, hyp))
    points = rng.standard_normal((20, 5))
    gram = np.asarray(se_kernel_matrix(points, points, hyp)) + hyp.noise_var * np.eye(20)
    chol, jitter = stable_cholesky(gram)
    assert jitter == 0.0
    np.testing.assert_allclose(chol @ chol.T, gram, atol=1e-12)


def test_cholesky_gives_up_on_indefinite_matrix():
    with pytest.raises(FactorizationError):
        stable_cholesky(-np.eye(3))


def test_one_step_predict_constant_velocity(plant):
    hyp = KernelHyp(np.ones(5), 0.01, 1e-4)
    model = build_model(GpDataset.empty(0.02), (hyp, hyp), plant)
    prediction = one_step_predict(JointState.zero(), 0.0, model)
    np.testing.assert_allclose(prediction.mean, np.zeros(4), atol=1e-15)


def test_one_step_predict_mean_and_covariance(small_model):
    state = JointState(np.array([0.4, -1.0]), np.array([0.3, 0.8]))
    u, ts = 1.2, small_model.sampling_time
    prediction = one_step_predict(state, u, small_model)
    mean_delta, var_delta = posterior(small_model, np.concatenate([state.q, state.qd, [u]]))

    np.testing.assert_allclose(prediction.mean[:2], state.q + ts * state.qd + 0.5 * ts * mean_delta)
    np.testing.assert_allclose(prediction.mean[2:], state.qd + mean_delta)
    for i in range(2):
        block = prediction.cov[np.ix_([i, i + 2], [i, i + 2])]
        expected = np.array([[ts * ts / 4.0, ts / 2.0], [ts / 2.0, 1.0]]) * var_delta[i]
        np.testing.assert_allclose(block, expected)
    # 两个自由度之间没有相关
    assert prediction.cov[0, 1] == prediction.cov[0, 3] == prediction.cov[1, 2] == 0.0


def test_sample_with_zero_noise_is_prediction_mean(small_model):
    state = JointState(np.array([1.0, 0.5]), np.array([-0.2, 0.4]))
    sample = sample_next_state(state, -0.7, small_model, np.zeros(2))
    prediction = one_step_predict(state, -0.7, small_model)
    np.testing.assert_allclose(sample.as_vector(), prediction.mean, rtol=1e-12, atol=1e-15)


def test_sample_moments(small_model, rng):
    n = 100_000
    x = np.array([0.2, -0.3, 0.5, 0.1, 0.4])
    q = np.tile(x[:2], (n, 1))
    qd = np.tile(x[2:4], (n, 1))
    u = np.full(n, x[4])
    _, qd_next = sample_next_batch(q, qd, u, small_model, rng.standard_normal((n, 2)))
    delta = qd_next - qd
    mean, var = posterior(small_model, x)
    stderr = np.sqrt(var / n)
    assert np.all(np.abs(delta.mean(axis=0) - mean) < 3.0 * stderr)
    np.testing.assert_allclose(delta.var(axis=0), var, rtol=0.05)


def test_posterior_variance_is_never_negative(small_model, rng):
    queries = np.column_stack([rng.uniform(-4, 4, (10_000, 4)), rng.uniform(-3, 3, 10_000)])
    queries[:30] = small_model.dataset.inputs
    result = posterior_batch(small_model, queries)
    assert np.all(result.var >= 0.0)
    assert result.clamped >= 0


def test_extra_point_never_raises_variance(plant, rng, make_dataset):
    hyp = KernelHyp(np.array([1.0, 1.2, 2.0, 2.5, 1.5]), 0.02, 1e-3)
    data = make_dataset(rng, 21)
    queries = np.vstack([
        np.column_stack([rng.uniform(-np.pi, np.pi, (400, 2)), rng.uniform(-3, 3, (400, 3))]),
        data.inputs,
    ])
    for n in range(1, 21):
        smaller = build_model(data.take(np.arange(n)), (hyp, hyp), plant)
        larger = build_model(data.take(np.arange(n + 1)), (hyp, hyp), plant)
        before = posterior_batch(smaller, queries).var
        after = posterior_batch(larger, queries).var
        assert np.all(after <= before + 1e-12), n


def test_subset_of_data(rng, make_dataset):
    small = make_dataset(rng, 100)
    assert subset_of_data(small, 200) is small

    large = make_dataset(rng, 500)
    subset = subset_of_data(large, 200)
    assert len(subset) == 200
    np.testing.assert_array_equal(subset.inputs, large.inputs[-200:])
    np.testing.assert_array_equal(subset.targets, large.targets[-200:])
    with pytest.raises(ValueError):
        subset_of_data(large, 0)


def test_subset_of_data_accuracy(plant, rng):
    ts = 0.02
    inputs = np.column_stack([rng.uniform(-np.pi, np.pi, (600, 2)), rng.uniform(-3, 3, (600, 3))])

    def targets_for(x):
        residual = np.column_stack([0.05 * np.sin(x[:, 0]), 0.05 * np.cos(x[:, 0])])
        return prior_mean_batch(x, plant, ts) + residual

    train = GpDataset(inputs[:500], targets_for(inputs[:500]), ts)
    held_out = inputs[500:]
    hyp = KernelHyp(np.array([1.0, 10.0, 10.0, 10.0, 10.0]), 0.0025, 1e-6)
    full = build_model(train, (hyp, hyp), plant)
    reduced = build_model(subset_of_data(train, 200), (hyp, hyp), plant)
    truth = targets_for(held_out)
    rmse_full = float(np.sqrt(np.mean((posterior_batch(full, held_out).mean - truth) ** 2)))
    rmse_sub = float(np.sqrt(np.mean((posterior_batch(reduced, held_out).mean - truth) ** 2)))
    logger.info("📊 Subset of Data RMSE: full %.2e, subset %.2e", rmse_full, rmse_sub)
    assert rmse_sub <= 2.0 * rmse_full + 1e-3


@pytest.fixture(scope="module")
def synthetic_gp_data():
    """从 ℓ=1, σ_f²=1, σ_n²=1e-4 的SE-GP采样的残差目标"""
    from plant.dynamics import PlantParams

    params = PlantParams()
    gen = np.random.default_rng(2024)
    inputs = gen.uniform(-1.5, 1.5, (200, 5))
    hyp = KernelHyp(np.ones(5), 1.0, 1e-4)
    gram = np.asarray(se_kernel_matrix(inputs, inputs, hyp)) + 1e-4 * np.eye(200)
    chol = np.linalg.cholesky(gram)
    residual = chol @ gen.standard_normal((200, 2))
    return params, inputs, residual


def test_hyperparameter_recovery(synthetic_gp_data):
    params, inputs, residual = synthetic_gp_data
    data = GpDataset(inputs, prior_mean_batch(inputs, params, 0.02) + residual, 0.02)
    fit = fit_hyperparameters(data, params)
    for hyp in fit.hyps:
        assert np.all(hyp.lengthscales > 0.5) and np.all(hyp.lengthscales < 2.0), hyp.lengthscales
    assert len(fit.converged) == 2


def test_doubling_targets_scales_signal_variance(synthetic_gp_data):
    params, inputs, residual = synthetic_gp_data
    prior = prior_mean_batch(inputs[:100], params, 0.02)
    single = fit_hyperparameters(GpDataset(inputs[:100], prior + residual[:100], 0.02), params)
    double = fit_hyperparameters(GpDataset(inputs[:100], prior + 2.0 * residual[:100], 0.02), params)
    for a, b in zip(single.hyps, double.hyps):
        assert 3.5 < b.signal_var / a.signal_var < 4.5


def test_zero_residual_targets_respect_noise_floor(plant, rng):
    inputs = np.column_stack([rng.uniform(-1, 1, (20, 4)), rng.uniform(-1, 1, 20)])
    data = GpDataset(inputs, prior_mean_batch(inputs, plant, 0.02), 0.02)
    fit = fit_hyperparameters(data, plant)
    for hyp in fit.hyps:
        assert hyp.noise_var >= NOISE_FLOOR
        assert np.isfinite(hyp.signal_var)


def test_fit_requires_ten_points(plant, rng, make_dataset):
    with pytest.raises(ValueError):
        fit_hyperparameters(make_dataset(rng, 9), plant)


def test_dataset_and_hyperparameter_files(tmp_path, rng, make_dataset):
    data = make_dataset(rng, 12)
    path = data.to_csv(tmp_path / "dataset.csv")
    loaded = GpDataset.from_csv(path, 0.02)
    np.testing.assert_allclose(loaded.inputs, data.inputs, rtol=1e-15)
    np.testing.assert_allclose(loaded.targets, data.targets, rtol=1e-15)

    hyps = (KernelHyp(np.arange(1.0, 6.0), 0.2, 1e-3), KernelHyp(np.ones(5), 0.5, 1e-4))
    save_hyperparameters(tmp_path / "model.json", hyps, 0.02)
    restored, ts = load_hyperparameters(tmp_path / "model.json")
    assert ts == 0.02
    np.testing.assert_array_equal(restored[0].lengthscales, hyps[0].lengthscales)
    assert restored[1].noise_var == hyps[1].noise_var


def test_dataset_validation():
    with pytest.raises(ValueError):
        GpDataset(np.zeros((3, 5)), np.zeros((2, 2)), 0.02)
    with pytest.raises(ValueError):
        GpDataset.empty(0.02).append(GpDataset.empty(0.01))
    with pytest.raises(ValueError):
        KernelHyp(np.ones(5), -1.0, 1e-4)
