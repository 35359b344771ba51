#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : evaluation.py
@Time    : 2025年08月09日 10:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 比赛式评测 - 60 s / 500 Hz 回合, 随机PID重置, 性能得分

控制器按 control_period (默认 50 Hz, 即每10个仿真步一次) 采样并零阶保持; 重置窗口内PID力矩覆盖控制器输出。
得分为状态处于成功区域的时间比例, 是对比赛评分的近似, 不是官方公式。
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from control.controller import Controller
from core.config import HarnessConfig
from plant.dynamics import JointState, PlantParams, wrap_angle
from plant.simulator import SIM_DT, PlantSimulator, control_substeps

from .episode_log import RESET_MODE, EpisodeLog

logger = logging.getLogger(__name__)

DIVERGENCE_SPEED = 1e3


@dataclass(frozen=True)
class ResetEvent:
    """随机重置: 在 time 时刻起用PID把驱动关节拉向 target, 持续 duration 秒"""
    time: float
    target: np.ndarray
    duration: float = 0.2
    kp: float = 10.0
    ki: float = 0.0
    kd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "target", np.asarray(self.target, dtype=float).reshape(2))
        if self.duration <= 0:
            raise ValueError("重置时长必须为正")

    def active(self, t: float) -> bool:
        # 以半步容差比较, 避免 k·dt 的浮点误差改变窗口长度
        eps = 0.5 * SIM_DT
        return self.time - eps <= t < self.time + self.duration - eps

    def to_dict(self) -> dict:
        return {"time": self.time, "target": self.target.tolist(), "duration": self.duration}


def make_reset_schedule(seed, episode_length: float, config: Optional[HarnessConfig] = None) -> List[ResetEvent]:
    """
    更新过程生成的重置计划: 间隔 ~ U[gap_min, gap_max] / rate, 目标 ~ U(-π, π)²

    rate = 0 时返回空列表; 事件互不重叠且完整落在回合内。
    """
    config = config or HarnessConfig()
    if config.reset_rate == 0:
        return []
    rng = np.random.default_rng(seed)
    events: List[ResetEvent] = []
    t = 0.0
    while True:
        gap = rng.uniform(config.reset_gap_min, config.reset_gap_max) / config.reset_rate
        t += max(gap, config.reset_duration)
        if t + config.reset_duration > episode_length:
            break
        target = rng.uniform(-np.pi, np.pi, size=2)
        events.append(ResetEvent(
            time=float(t),
            target=target,
            duration=config.reset_duration,
            kp=config.pid_kp,
            ki=config.pid_ki,
            kd=config.pid_kd,
        ))
        t += config.reset_duration
    return events


class ResetPid:
    """驱动关节的PID, 误差取包裹后的角度差"""

    def __init__(self, event: ResetEvent, joint: int):
        self.event = event
        self.joint = joint
        self.integral = 0.0

    def torque(self, state: JointState, dt: float) -> float:
        error = float(wrap_angle(self.event.target[self.joint] - state.q[self.joint]))
        self.integral += error * dt
        return self.event.kp * error + self.event.ki * self.integral - self.event.kd * state.qd[self.joint]


def success_mask(states: np.ndarray, config: Optional[HarnessConfig] = None) -> np.ndarray:
    """|e_q| < success_angle 且 |qd| < success_velocity (逐关节)"""
    config = config or HarnessConfig()
    states = np.asarray(states, dtype=float).reshape(-1, 4)
    err_q = wrap_angle(states[:, :2] - np.array([np.pi, 0.0]))
    ok_q = np.all(np.abs(err_q) < config.success_angle, axis=1)
    ok_v = np.all(np.abs(states[:, 2:]) < config.success_velocity, axis=1)
    return ok_q & ok_v


def performance_score(log: EpisodeLog, config: Optional[HarnessConfig] = None) -> float:
    """成功区域内时间占已运行时长的比例; 每个采样区间按左端点判定"""
    if len(log) == 0:
        return 0.0
    inside = success_mask(log.states, config)
    if len(log) == 1:
        return float(inside[0])
    widths = np.diff(log.t)
    return float(np.sum(widths * inside[:-1]) / np.sum(widths))


def evaluate_episode(
    controller: Controller,
    params: PlantParams,
    seed: int,
    schedule: Optional[Sequence[ResetEvent]] = None,
    config: Optional[HarnessConfig] = None,
    start: Optional[JointState] = None,
    duration: Optional[float] = None,
):
    """
    运行一个评测回合, 返回 (EpisodeLog, score)

    控制器在每个 50 Hz 节拍都被采样 (重置期间输出被丢弃), 保证零阶保持与仿真步严格对齐。
    状态发散时截断回合, 得分按已运行时长计算并在元数据中标记。
    """
    config = config or HarnessConfig()
    duration = config.episode_duration if duration is None else duration
    if schedule is None:
        schedule = make_reset_schedule(seed, duration, config)
    schedule = list(schedule)
    state = start or JointState.zero()
    substeps = control_substeps(config.control_period)
    sim = PlantSimulator(params, SIM_DT)
    controller.reset()

    n_steps = int(round(duration / SIM_DT))
    states = np.empty((n_steps + 1, 4))
    torques = np.zeros(n_steps + 1)
    modes = np.empty(n_steps + 1, dtype=object)
    states[0] = state.as_vector()

    u_ctrl = 0.0
    pid: Optional[ResetPid] = None
    diverged = False
    last = n_steps
    for k in range(n_steps):
        t = k * SIM_DT
        if k % substeps == 0:
            u_ctrl = controller.step(state)
        event = next((ev for ev in schedule if ev.active(t)), None)
        if event is not None:
            if pid is None or pid.event is not event:
                pid = ResetPid(event, params.actuated_joint)
            u = pid.torque(state, SIM_DT)
            modes[k] = RESET_MODE
        else:
            pid = None
            u = u_ctrl
            modes[k] = controller.mode.value
        u = sim.applied_torque(u)
        torques[k] = u
        state = sim.step(state, u)
        states[k + 1] = state.as_vector()
        if not state.is_finite() or np.max(np.abs(state.qd)) > DIVERGENCE_SPEED:
            diverged = True
            last = k + 1
            logger.warning("⚠️ 仿真在 t=%.3f s 发散, 回合截断", (k + 1) * SIM_DT)
            break

    torques[last] = torques[last - 1] if last > 0 else 0.0
    modes[last] = modes[last - 1] if last > 0 else controller.mode.value
    if diverged:
        # 截断时最后一个样本不可用, 保留到最后一个有限状态
        last -= 1
    log = EpisodeLog(
        t=np.arange(last + 1) * SIM_DT,
        states=states[: last + 1],
        torques=torques[: last + 1],
        modes=modes[: last + 1],
        metadata={
            "seed": seed,
            "variant": params.variant,
            "controller": getattr(controller, "name", "controller"),
            "resets": len(schedule),
            "diverged": diverged,
            "clamp_events": sim.clamp_events,
        },
    )
    score = performance_score(log, config)
    return log, score
