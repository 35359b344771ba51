#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : test_autodiff.py
@Time    : 2025年08月12日 10:10:00
@Author  : 宝总
@Version : 1.0
@Desc    : 反向模式自动微分测试
"""

import numpy as np
import pytest

from core.artifacts import read_json
from core.config import OptimizerConfig
from core.exceptions import UnsupportedPrimitiveError
from engine.autodiff import Trace, dump_trace_stats, finite_diff_check, record_and_grad
from policy.particle_optimizer import particle_noise, rollout_objective, sample_initial_particles, InitialDistribution
from policy.rbf_policy import init_policy


def test_constant_function_has_zero_gradient():
    value, grad = record_and_grad(lambda x: 3.0, np.arange(4.0))
    assert value == 3.0
    np.testing.assert_array_equal(grad, np.zeros(4))


def test_squared_norm_of_weights():
    params = init_policy(0, n_basis=5)
    value, grad = record_and_grad(lambda p: np.sum(p.weights * p.weights), params)
    assert value == pytest.approx(float(np.sum(params.weights ** 2)))
    np.testing.assert_allclose(grad[:5], 2.0 * params.weights)
    np.testing.assert_array_equal(grad[5:], 0.0)


@pytest.mark.parametrize("fn", [
    lambda x: np.sum(np.tanh(x) * np.exp(-x * x)),
    lambda x: np.sum(np.sin(x) @ np.reshape(np.cos(x), (-1, 1))),
    lambda x: np.mean(np.sqrt(x * x + 1.0) / (2.0 + np.cos(x))),
    lambda x: np.sum(np.where(x > 0, x ** 3, -x) + np.maximum(x, 0.1)),
    lambda x: np.sum(np.concatenate([x[:2], np.square(x[2:])]) * np.arange(1.0, 5.0)),
])
def test_gradients_match_finite_differences(fn):
    x = np.array([0.3, -1.2, 0.7, 2.1])
    report = finite_diff_check(fn, x, step=1e-5, tolerance=1e-6)
    assert report.passed, report.summary()


def test_linear_function_is_exact():
    weights = np.array([1.5, -2.0, 0.25])
    report = finite_diff_check(lambda x: np.sum(weights * x), np.ones(3))
    assert report.max_relative_error < 1e-9


def test_tiny_step_is_flagged():
    x = np.linspace(0.1, 2.0, 20)
    report = finite_diff_check(lambda v: np.sum(np.tanh(v)), x, step=1e-12, tolerance=1e-6)
    assert not report.passed
    assert "cancellation" in report.flags
    assert report.coarse_relative_error < 0.1 * report.max_relative_error

    # 步长过大是截断误差, 放大步长只会更糟
    coarse = finite_diff_check(lambda v: np.sum(np.tanh(v)), x, step=1e-1, tolerance=1e-6)
    assert "mismatch" in coarse.flags
    assert "cancellation" not in coarse.flags

    clean = finite_diff_check(lambda v: np.sum(np.tanh(v)), x, step=1e-5, tolerance=1e-6)
    assert clean.passed and clean.flags == []
    with pytest.raises(ValueError):
        finite_diff_check(lambda x: np.sum(x), np.ones(2), step=0.0)


def test_unsupported_primitive_is_named():
    with pytest.raises(UnsupportedPrimitiveError, match="arctan2"):
        record_and_grad(lambda x: np.sum(np.arctan2(x, 1.0)), np.ones(3))


def test_recorded_value_equals_plain_evaluation():
    x = np.linspace(-1.0, 1.0, 7)

    def fn(v):
        return np.sum(np.tanh(3.0 * v) * np.cos(v) + np.exp(v) / 7.0)

    value, _ = record_and_grad(fn, x)
    assert value == pytest.approx(float(fn(x)), abs=1e-12)


def test_gradient_of_sum_is_sum_of_gradients():
    x = np.array([0.2, -0.4, 1.1])
    _, g1 = record_and_grad(lambda v: np.sum(np.sin(v)), x)
    _, g2 = record_and_grad(lambda v: np.sum(v * v * v), x)
    _, g12 = record_and_grad(lambda v: np.sum(np.sin(v)) + np.sum(v * v * v), x)
    np.testing.assert_allclose(g12, g1 + g2, rtol=1e-14)


def test_backward_requires_scalar_output():
    trace = Trace()
    leaf = trace.leaf(np.ones(3))
    with pytest.raises(ValueError):
        trace.backward(leaf * 2.0)


def _tiny_rollout(model, n_particles, seed=7):
    config = OptimizerConfig(n_particles=n_particles, horizon=0.1)
    horizon = config.horizon_steps(model.sampling_time)
    init_seq, noise_seq = np.random.SeedSequence(seed).spawn(2)
    x0 = sample_initial_particles(InitialDistribution.nominal(0.5), n_particles, init_seq)
    noise = particle_noise(n_particles, horizon, noise_seq)
    return config, x0, noise


def test_particle_rollout_gradient_matches_finite_differences(small_model):
    policy = init_policy(3, n_basis=4)
    config, x0, noise = _tiny_rollout(small_model, 2)
    assert noise.shape == (2, 5, 2)
    objective = rollout_objective(small_model, x0, noise, config)
    report = finite_diff_check(objective, policy, step=1e-5, tolerance=1e-4)
    assert report.passed, report.summary()
    assert report.checked_components > 0


def test_mean_over_particles_is_mean_of_gradients(small_model):
    policy = init_policy(5, n_basis=3)
    config, x0, noise = _tiny_rollout(small_model, 2)
    _, joint = record_and_grad(rollout_objective(small_model, x0, noise, config), policy)
    per_particle = [
        record_and_grad(rollout_objective(small_model, x0[i:i + 1], noise[i:i + 1], config), policy)[1]
        for i in range(2)
    ]
    np.testing.assert_allclose(joint, np.mean(per_particle, axis=0), rtol=1e-9, atol=1e-12)


def test_gradients_are_repeatable(small_model):
    policy = init_policy(9, n_basis=3)
    config, x0, noise = _tiny_rollout(small_model, 2)
    objective = rollout_objective(small_model, x0, noise, config)
    first = record_and_grad(objective, policy)
    second = record_and_grad(objective, policy)
    assert first[0] == second[0]
    np.testing.assert_array_equal(first[1], second[1])


def test_dump_trace_stats(tmp_path):
    stats = dump_trace_stats(lambda x: np.sum(np.exp(x)), np.ones(10), tmp_path / "trace.json")
    saved = read_json(tmp_path / "trace.json", kind="trace_stats")
    assert saved["nodes"] == stats["nodes"] > 0
    assert saved["value"] == pytest.approx(10.0 * np.e)
