#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : test_control.py
@Time    : 2025年08月13日 09:20:00
@Author  : 宝总
@Version : 1.0
@Desc    : LQR平衡、阻尼回退与模式切换测试
"""

import numpy as np
import pytest

from core.config import build_config
from core.exceptions import RiccatiError
from control.controller import (
    Controller,
    ControllerAssets,
    ControllerMode,
    controller_step,
    damping_controller,
    next_mode,
)
from control.lqr import (
    GOAL_STATE,
    LqrStabilizer,
    design_lqr,
    in_roa,
    linearize_at_goal,
    lqr_convergence_rate,
    lqr_gain,
    load_lqr,
    riccati_residual,
    save_lqr,
)
from plant.dynamics import JointState, PlantParams, forward_dynamics, total_energy
from plant.simulator import SIM_DT, PlantSimulator
from policy.rbf_policy import init_policy

HOLD_STEPS = 10


def goal_offset(offset) -> JointState:
    return JointState.from_vector(GOAL_STATE + np.asarray(offset, dtype=float))


def test_scalar_riccati_solution():
    K, S = lqr_gain(np.array([[1.0]]), np.array([1.0]), np.array([[1.0]]), 1.0)
    assert S[0, 0] == pytest.approx(1.0 + np.sqrt(2.0), rel=1e-12)
    assert K[0] == pytest.approx(1.0 + np.sqrt(2.0), rel=1e-12)


def test_uncontrollable_system_raises():
    # 不稳定且不可控: 不存在镇定解
    with pytest.raises(RiccatiError):
        lqr_gain(np.diag([1.0, 2.0]), np.array([1.0, 0.0]), np.eye(2), 1.0)
    with pytest.raises(ValueError):
        lqr_gain(np.eye(1), np.ones(1), np.eye(1), 0.0)


@pytest.mark.parametrize("variant", ["pendubot", "acrobot"])
def test_riccati_residual_and_closed_loop_stability(variant):
    params = PlantParams(variant=variant)
    A, B = linearize_at_goal(params)
    Q = np.diag([10.0, 10.0, 1.0, 1.0])
    K, S = lqr_gain(A, B, Q, 1.0)
    residual = riccati_residual(A, B, Q, 1.0, S)
    assert np.linalg.norm(residual) / max(1.0, np.linalg.norm(Q)) < 1e-8
    np.testing.assert_allclose(S, S.T, atol=1e-10)
    assert np.all(np.linalg.eigvalsh(0.5 * (S + S.T)) > 0)
    assert np.all(np.linalg.eigvals(A - np.outer(B, K)).real < 0)


@pytest.mark.parametrize("params", [
    PlantParams(),
    PlantParams(variant="acrobot"),
    PlantParams(b1=0.05, b2=0.02),
])
def test_linearization_matches_finite_differences(params):
    A, B = linearize_at_goal(params)
    np.testing.assert_array_equal(A[:2, :2], np.zeros((2, 2)))
    np.testing.assert_array_equal(A[:2, 2:], np.eye(2))
    np.testing.assert_array_equal(B[:2], np.zeros(2))

    h = 1e-6
    for i in range(4):
        step = np.zeros(4)
        step[i] = h
        plus = forward_dynamics(goal_offset(step), 0.0, params)
        minus = forward_dynamics(goal_offset(-step), 0.0, params)
        np.testing.assert_allclose(A[2:, i], (plus - minus) / (2.0 * h), atol=1e-6)
    goal = goal_offset(np.zeros(4))
    numeric_b = (forward_dynamics(goal, h, params) - forward_dynamics(goal, -h, params)) / (2.0 * h)
    np.testing.assert_allclose(B[2:], numeric_b, atol=1e-6)


@pytest.mark.parametrize("variant", ["pendubot", "acrobot"])
def test_lqr_holds_goal_for_ten_seconds(variant):
    params = PlantParams(variant=variant)
    lqr = design_lqr(params)
    sim = PlantSimulator(params, SIM_DT)
    start = goal_offset([0.005, -0.005, 0.0, 0.0])
    trace = sim.simulate(start, lambda t, s: lqr.torque(s), duration=10.0, hold_steps=HOLD_STEPS)
    final = JointState.from_vector(trace.states[-1])
    assert np.linalg.norm(final.as_vector() - GOAL_STATE) < 1e-6
    assert abs(lqr.torque(final)) < 1e-6


def test_convergence_rate_inside_small_ellipsoid():
    params = PlantParams()
    lqr = design_lqr(params)
    errors = np.array([[0.01, 0.0, 0.0, 0.0], [0.0, -0.01, 0.0, 0.0], [0.0, 0.0, 0.05, 0.05]])
    assert lqr_convergence_rate(params, lqr, errors, duration=5.0) == 1.0


def test_region_of_attraction_predicate():
    lqr = design_lqr(PlantParams(), rho=1.0)
    goal = goal_offset(np.zeros(4))
    assert in_roa(goal, lqr)
    assert lqr.torque(goal) == pytest.approx(0.0, abs=1e-12)

    state = goal_offset([0.05, -0.03, 0.2, 0.1])
    shifted = JointState(state.q + np.array([2.0 * np.pi, -4.0 * np.pi]), state.qd)
    assert lqr.value(shifted) == pytest.approx(lqr.value(state), rel=1e-9)
    assert in_roa(shifted, lqr) == in_roa(state, lqr)

    # 沿一条射线判定只翻转一次
    direction = np.array([1.0, -0.5, 2.0, 1.0])
    inside = [in_roa(goal_offset(s * direction), lqr) for s in np.linspace(0.0, 3.0, 301)]
    flips = np.count_nonzero(np.diff(np.asarray(inside, dtype=int)))
    assert inside[0] and not inside[-1]
    assert flips == 1

    with pytest.raises(ValueError):
        lqr.with_rho(0.0)


def test_lqr_checkpoint(tmp_path):
    lqr = design_lqr(PlantParams(variant="acrobot"), rho=2.5)
    loaded = load_lqr(save_lqr(tmp_path / "lqr.json", lqr))
    np.testing.assert_array_equal(loaded.K, lqr.K)
    np.testing.assert_array_equal(loaded.S, lqr.S)
    assert loaded.rho == 2.5
    assert isinstance(loaded, LqrStabilizer)


def test_damping_controller(plant):
    assert damping_controller(JointState.zero(), 0.5, plant) == 0.0
    moving = JointState(np.array([0.3, 0.1]), np.array([2.0, -7.0]))
    assert damping_controller(moving, 0.5, plant) == pytest.approx(-1.0)
    fast = JointState(np.zeros(2), np.array([-30.0, 0.0]))
    assert damping_controller(fast, 0.5, plant) == 3.0
    with pytest.raises(ValueError):
        damping_controller(moving, 0.0, plant)


def test_damping_removes_energy(plant):
    sim = PlantSimulator(plant, SIM_DT)
    start = JointState(np.array([0.5, -0.5]), np.array([5.0, 0.0]))
    trace = sim.simulate(start, lambda t, s: damping_controller(s, 0.5, plant), duration=5.0)
    energies = np.array([total_energy(JointState.from_vector(x), plant) for x in trace.states])
    assert np.all(np.diff(energies) < 1e-4)
    assert energies[-1] < 0.9 * energies[0]


def pendubot_assets(plant):
    config = build_config()
    return ControllerAssets.from_config(plant, config.control, policy=init_policy(0, n_basis=10))


def acrobot_assets(acrobot):
    config = build_config({"variant": "acrobot"})
    lqr = design_lqr(acrobot, rho=1.0)
    return ControllerAssets.from_config(acrobot, config.control, policy=init_policy(0, n_basis=10), lqr=lqr)


def test_damping_mode_hysteresis(plant):
    assets = pendubot_assets(plant)
    assert assets.damping_enabled and not assets.lqr_enabled

    def at_speed(v):
        return JointState(np.array([0.5, 0.2]), np.array([v, 0.0]))

    assert next_mode(at_speed(10.0), ControllerMode.POLICY, assets) is ControllerMode.POLICY
    assert next_mode(at_speed(25.0), ControllerMode.POLICY, assets) is ControllerMode.DAMPING
    assert next_mode(at_speed(10.0), ControllerMode.DAMPING, assets) is ControllerMode.DAMPING
    assert next_mode(at_speed(3.0), ControllerMode.DAMPING, assets) is ControllerMode.POLICY

    u, mode = controller_step(at_speed(25.0), ControllerMode.POLICY, assets)
    assert mode is ControllerMode.DAMPING
    assert u == pytest.approx(damping_controller(at_speed(25.0), assets.damping_gain, plant))


def test_acrobot_switches_to_lqr(acrobot):
    assets = acrobot_assets(acrobot)
    assert assets.lqr_enabled and not assets.damping_enabled

    goal = goal_offset(np.zeros(4))
    assert next_mode(goal, ControllerMode.POLICY, assets) is ControllerMode.LQR

    # eᵀSe 介于 ρ 与 exit_factor·ρ 之间: 已在LQR则保持, 否则不进入
    direction = np.array([1.0, 0.0, 0.0, 0.0])
    scale = np.sqrt(2.0 / assets.lqr.value(goal_offset(direction)))
    between = goal_offset(scale * direction)
    assert next_mode(between, ControllerMode.LQR, assets) is ControllerMode.LQR
    assert next_mode(between, ControllerMode.POLICY, assets) is ControllerMode.POLICY

    far = JointState.zero()
    assert next_mode(far, ControllerMode.LQR, assets) is ControllerMode.POLICY
    fast = JointState(np.zeros(2), np.array([40.0, 0.0]))
    assert next_mode(fast, ControllerMode.POLICY, assets) is ControllerMode.POLICY


@pytest.mark.parametrize("variant", ["pendubot", "acrobot"])
def test_commanded_torque_is_bounded(variant, rng):
    params = PlantParams(variant=variant)
    assets = pendubot_assets(params) if variant == "pendubot" else acrobot_assets(params)
    mode = ControllerMode.POLICY
    for x in rng.uniform(-30.0, 30.0, (500, 4)):
        u, mode = controller_step(JointState.from_vector(x), mode, assets)
        assert np.isfinite(u) and abs(u) <= params.torque_limit


def test_controller_wrapper_tracks_mode(plant):
    controller = Controller(pendubot_assets(plant), name="policy+damping")
    controller.step(JointState(np.zeros(2), np.array([30.0, 0.0])))
    assert controller.mode is ControllerMode.DAMPING
    controller.reset()
    assert controller.mode is ControllerMode.POLICY

    bare = Controller(ControllerAssets(params=plant, damping_enabled=False))
    assert bare.step(JointState.zero()) == 0.0
