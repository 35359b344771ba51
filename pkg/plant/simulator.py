#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : simulator.py
@Time    : 2025年08月02日 16:20:00
@Author  : 宝总
@Version : 1.0
@Desc    : 500 Hz RK4 仿真器, 带力矩饱和计数
"""

import logging
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .dynamics import JointState, PlantParams, rk4_step_batch, saturate_torque

logger = logging.getLogger(__name__)

SIM_DT = 0.002


def control_substeps(sampling_time: float, dt: float = SIM_DT) -> int:
    """控制周期对应的仿真步数, 必须为正整数倍"""
    substeps = int(round(sampling_time / dt))
    if substeps < 1 or not np.isclose(substeps * dt, sampling_time, rtol=1e-9, atol=1e-12):
        raise ValueError(f"采样时间 {sampling_time} 不是仿真步长 {dt} 的整数倍")
    return substeps


@dataclass
class SimulationTrace:
    """固定步长仿真轨迹"""
    t: np.ndarray
    states: np.ndarray  # (L, 4) [q1, q2, qd1, qd2]
    torques: np.ndarray  # (L,), 最后一个样本重复上一步力矩
    clamp_events: int = 0


@dataclass
class PlantSimulator:
    """
    真实对象仿真器

    力矩在进入积分前饱和到 ±u_M, 每次截断计数并以DEBUG级别记录。
    """
    params: PlantParams
    dt: float = SIM_DT
    clamp_events: int = field(default=0, init=False)

    def step(self, state: JointState, u: float) -> JointState:
        u, clamped = saturate_torque(u, self.params)
        if clamped:
            self.clamp_events += 1
            logger.debug("⚠️ 力矩截断 #%d -> %.3f N·m", self.clamp_events, u)
        q, qd = rk4_step_batch(state.q[None, :], state.qd[None, :], np.array([u]), self.dt, self.params)
        return JointState(q[0], qd[0])

    def applied_torque(self, u: float) -> float:
        return saturate_torque(u, self.params)[0]

    def simulate(
        self,
        state: JointState,
        torque_fn: Callable[[float, JointState], float],
        duration: float,
        hold_steps: int = 1,
        stop_fn: Optional[Callable[[JointState], bool]] = None,
    ) -> SimulationTrace:
        """
        以 dt 积分 duration 秒; torque_fn 每 hold_steps 步调用一次 (零阶保持)
        """
        n_steps = int(round(duration / self.dt))
        states = np.empty((n_steps + 1, 4))
        torques = np.empty(n_steps + 1)
        states[0] = state.as_vector()
        start_clamps = self.clamp_events
        u = 0.0
        last = n_steps
        for k in range(n_steps):
            if k % hold_steps == 0:
                u = self.applied_torque(torque_fn(k * self.dt, state))
            torques[k] = u
            state = self.step(state, u)
            states[k + 1] = state.as_vector()
            if stop_fn is not None and stop_fn(state):
                last = k + 1
                break
        torques[last] = torques[last - 1] if last > 0 else 0.0
        t = np.arange(last + 1) * self.dt
        return SimulationTrace(
            t=t,
            states=states[: last + 1],
            torques=torques[: last + 1],
            clamp_events=self.clamp_events - start_clamps,
        )
