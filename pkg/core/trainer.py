#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : trainer.py
@Time    : 2025年08月10日 10:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 试验循环 - 模型学习 / 策略更新 / 策略执行, 带递增初始分布课程
"""

import logging
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import numpy as np
import pandas as pd

from harness.episode_log import EpisodeLog
from memory.transition_memory import TransitionMemory, TrialEntry
from models.gp_model import (
    DEFAULT_HYP,
    GpDataset,
    GpModel,
    build_model,
    fit_hyperparameters,
    load_hyperparameters,
    save_hyperparameters,
    subset_of_data,
)
from plant.dynamics import JointState, PlantParams
from plant.simulator import SIM_DT, PlantSimulator, control_substeps
from policy.particle_optimizer import (
    InitialDistribution,
    OptimizationResult,
    optimize_policy,
    sample_initial_particles,
    saturated_cost_batch,
    save_cost_history,
)
from policy.rbf_policy import PolicyParams, init_policy, policy_eval, save_policy

from .artifacts import write_json
from .config import LabConfig, write_snapshot
from .exceptions import CheckpointError

logger = logging.getLogger(__name__)

EXPLORATION_TRIAL = -1


class TrainerState(Enum):
    """训练会话状态"""
    IDLE = "idle"
    MODEL_LEARNING = "model_learning"
    POLICY_UPDATE = "policy_update"
    EXECUTION = "execution"
    FAILED = "failed"


@dataclass
class TrialRecord:
    """单次试验的结果"""
    trial: int
    gamma: float
    log: Optional[EpisodeLog] = None
    dataset_rows: int = 0
    policy: Optional[PolicyParams] = None
    history: pd.DataFrame = field(default_factory=lambda: pd.DataFrame(columns=["step", "J_hat", "lr", "dropout_rate"]))
    execution_cost: float = float("nan")
    success: bool = True
    error: Optional[str] = None
    exit_reason: str = ""
    rejected_steps: int = 0
    hyper_converged: bool = True

    def summary(self) -> Dict[str, Any]:
        return {
            "trial": self.trial,
            "gamma": self.gamma,
            "dataset_rows": self.dataset_rows,
            "execution_cost": None if np.isnan(self.execution_cost) else self.execution_cost,
            "optimizer_steps": len(self.history),
            "exit_reason": self.exit_reason,
            "rejected_steps": self.rejected_steps,
            "hyper_converged": self.hyper_converged,
            "success": self.success,
            "error": self.error,
        }


@dataclass
class TrainingOutcome:
    policy: PolicyParams
    model: Optional[GpModel]
    records: List[TrialRecord]
    run_dir: Optional[Path] = None


# ---------------------------------------------------------------- 课程与数据

def gamma_schedule(k: int, k_m: int, ramp: int) -> float:
    """γ_k = clip((k - k_m) / K, 0, 1)"""
    if k < 0:
        raise ValueError("试验序号必须 ≥ 0")
    if ramp < 1:
        raise ValueError("K 必须 ≥ 1")
    return float(np.clip((k - k_m) / ramp, 0.0, 1.0))


def surrogate_distribution(gamma: float, x_max) -> InitialDistribution:
    return InitialDistribution(np.asarray(x_max, dtype=float), float(gamma))


def execution_log(
    params: PlantParams,
    start: JointState,
    torque_fn,
    duration: float,
    sampling_time: float,
    mode: str,
    **metadata,
) -> EpisodeLog:
    """500 Hz 仿真, torque_fn 以采样时间零阶保持, 日志按控制频率抽样"""
    substeps = control_substeps(sampling_time)
    sim = PlantSimulator(params, SIM_DT)
    trace = sim.simulate(start, torque_fn, duration, hold_steps=substeps)
    return EpisodeLog.from_trace(trace, mode=mode, stride=substeps, clamp_events=trace.clamp_events, **metadata)


def exploration_rollout(
    params: PlantParams,
    seed,
    duration: float = 3.0,
    amplitude: Optional[float] = None,
    segment: float = 0.1,
    sampling_time: float = 0.02,
    start: Optional[JointState] = None,
) -> EpisodeLog:
    """分段常值随机力矩 (每段 ~ U(±amplitude)) 的探索回合"""
    if duration <= 0:
        raise ValueError("duration 必须为正")
    amplitude = params.torque_limit if amplitude is None else amplitude
    ticks_per_segment = max(int(round(segment / sampling_time)), 1)
    n_segments = int(np.ceil(duration / (ticks_per_segment * sampling_time))) + 1
    levels = np.random.default_rng(seed).uniform(-amplitude, amplitude, n_segments)

    def torque_fn(t: float, state: JointState) -> float:
        tick = int(round(t / sampling_time))
        return float(levels[min(tick // ticks_per_segment, n_segments - 1)])

    return execution_log(
        params, start or JointState.zero(), torque_fn, duration, sampling_time, "EXPLORATION",
        seed=str(seed), variant=params.variant, controller="exploration",
    )


def replay_execution(
    policy: PolicyParams,
    params: PlantParams,
    start: JointState,
    seed=None,
    duration: float = 3.0,
    sampling_time: float = 0.02,
) -> EpisodeLog:
    """在 500 Hz 仿真器上执行策略 (50 Hz 零阶保持); 相同输入得到逐位相同的日志"""
    return execution_log(
        params, start, lambda t, state: policy_eval(policy, state), duration, sampling_time, "POLICY",
        seed=None if seed is None else str(seed), variant=params.variant, controller="policy",
    )


def collect_transitions(log: EpisodeLog, sampling_time: float) -> GpDataset:
    """相邻样本差分得到 (x̃_t, Δ_t = qd_{t+1} - qd_t), 共 L-1 行"""
    if len(log) < 2:
        return GpDataset.empty(sampling_time)
    log.check_uniform(sampling_time)
    inputs = np.hstack([log.states[:-1], log.torques[:-1, None]])
    targets = log.states[1:, 2:] - log.states[:-1, 2:]
    return GpDataset(inputs, targets, sampling_time)


def trajectory_cost(log: EpisodeLog, length_scale: float = 3.0) -> float:
    """执行轨迹的累计饱和代价"""
    return float(np.sum(saturated_cost_batch(log.states[:, :2], length_scale)))


def trial_seeds(seed: int, k: int):
    """试验 k 的 (优化, 执行) 种子, 与试验执行顺序无关"""
    return np.random.SeedSequence(seed, spawn_key=(k,)).spawn(2)


# ---------------------------------------------------------------- 训练会话

class TrainingSession:
    """
    训练会话

    持有转移记忆、GP模型、当前策略与所有试验记录。试验之间严格串行,
    单个组件失败只把该试验标记为失败, 训练继续。
    """

    def __init__(self, config: LabConfig, run_dir: Union[str, Path, None] = None):
        self.config = config
        self.params = config.plant
        self.sampling_time = config.gp.sampling_time
        self.run_dir = Path(run_dir) if run_dir is not None else None
        db_path = None if self.run_dir is None else self.run_dir / "transitions.db"
        self.memory = TransitionMemory(db_path, sampling_time=self.sampling_time, fresh=True)
        self.state = TrainerState.IDLE
        self.model: Optional[GpModel] = None
        self.hyps = (DEFAULT_HYP, DEFAULT_HYP)
        self._last_hyper_converged = True
        self.policy = init_policy(
            np.random.SeedSequence(config.seed, spawn_key=(2 ** 20,)),
            n_basis=config.policy.n_basis,
            u_max=self.params.torque_limit,
            velocity_range=config.policy.velocity_range,
        )
        self.records: List[TrialRecord] = []
        self.performance_stats = {
            "trials_completed": 0,
            "trials_failed": 0,
            "model_time": 0.0,
            "policy_time": 0.0,
            "execution_time": 0.0,
            "start_time": time.time(),
        }
        if self.run_dir is not None:
            self.run_dir.mkdir(parents=True, exist_ok=True)
            write_snapshot(config, self.run_dir / "config.snapshot")

    # ------------------------------------------------------------ 阶段

    def gamma_for(self, k: int) -> float:
        if self.config.mode == "standard":
            return 1.0
        return gamma_schedule(k, self.config.curriculum.k_m, self.config.curriculum.ramp)

    def explore(self) -> EpisodeLog:
        """初始探索数据, 从 γ=0 的起点 (原点) 出发"""
        curriculum = self.config.curriculum
        log = exploration_rollout(
            self.params,
            np.random.SeedSequence(self.config.seed, spawn_key=(2 ** 21,)),
            duration=curriculum.exploration_duration,
            segment=curriculum.exploration_segment,
            sampling_time=self.sampling_time,
        )
        rows = self.memory.add_transitions(collect_transitions(log, self.sampling_time), EXPLORATION_TRIAL)
        self.memory.record_trial(TrialEntry(EXPLORATION_TRIAL, 0.0, rows, True, {"kind": "exploration"}))
        if self.run_dir is not None:
            log.to_csv(self.run_dir / "exploration" / "episode.csv")
        logger.info("🚀 探索回合完成, 采集 %d 条转移", rows)
        return log

    def learn_model(self) -> GpModel:
        """在最近 max_points 条数据上拟合超参数并重建模型"""
        self.state = TrainerState.MODEL_LEARNING
        started = time.time()
        dataset = subset_of_data(self.memory.recall(), self.config.gp.max_points)
        converged = True
        if len(dataset) >= 10:
            fit = fit_hyperparameters(dataset, self.params, self.config.gp.max_iterations)
            self.hyps = fit.hyps
            converged = fit.all_converged
        self.model = build_model(dataset, self.hyps, self.params)
        self.performance_stats["model_time"] += time.time() - started
        self._last_hyper_converged = converged
        return self.model

    def update_policy(self, dist: InitialDistribution, seed) -> OptimizationResult:
        self.state = TrainerState.POLICY_UPDATE
        started = time.time()
        result = optimize_policy(self.model, self.policy, dist, self.config.optimizer, seed)
        self.policy = result.params
        self.performance_stats["policy_time"] += time.time() - started
        return result

    def execute(self, dist: InitialDistribution, seed, k: int) -> EpisodeLog:
        self.state = TrainerState.EXECUTION
        started = time.time()
        start = JointState.from_vector(sample_initial_particles(dist, 1, seed)[0])
        log = replay_execution(
            self.policy, self.params, start, seed=k,
            duration=self.config.execution_duration, sampling_time=self.sampling_time,
        )
        log.metadata["start"] = start.as_vector().tolist()
        self.performance_stats["execution_time"] += time.time() - started
        return log

    # ------------------------------------------------------------ 试验

    def run_trial(self, k: int) -> TrialRecord:
        """一次完整试验; 任一阶段异常只标记本次试验失败"""
        if k < 0:
            raise ValueError("试验序号必须 ≥ 0")
        if len(self.memory) == 0:
            self.explore()
        gamma = self.gamma_for(k)
        dist = surrogate_distribution(gamma, self.config.curriculum.x_max())
        opt_seed, exec_seed = trial_seeds(self.config.seed, k)
        record = TrialRecord(trial=k, gamma=gamma)
        logger.info("🚀 试验 %d 开始, γ=%.2f", k, gamma)
        try:
            self.learn_model()
            record.hyper_converged = self._last_hyper_converged
            result = self.update_policy(dist, opt_seed)
            record.history = result.history
            record.exit_reason = result.exit_reason
            record.rejected_steps = result.rejected_steps
            record.policy = self.policy
            log = self.execute(dist, exec_seed, k)
            record.log = log
            record.execution_cost = trajectory_cost(log, self.config.optimizer.cost_length_scale)
            rows = self.memory.add_transitions(collect_transitions(log, self.sampling_time), k)
            record.dataset_rows = len(self.memory)
            self.performance_stats["trials_completed"] += 1
            logger.info("✅ 试验 %d 完成: 执行代价 %.3f, 新增 %d 条数据", k, record.execution_cost, rows)
        except Exception as e:
            self.state = TrainerState.FAILED
            record.success = False
            record.error = f"{type(e).__name__}: {e}"
            record.policy = self.policy
            record.dataset_rows = len(self.memory)
            self.performance_stats["trials_failed"] += 1
            logger.error("❌ 试验 %d 失败: %s", k, record.error)
        self.memory.record_trial(TrialEntry(k, gamma, record.dataset_rows, record.success, record.summary()))
        self.records.append(record)
        if self.run_dir is not None:
            self._write_trial(record)
        self.state = TrainerState.IDLE
        return record

    def train(self) -> TrainingOutcome:
        """运行完整课程, 产物写入运行目录"""
        total = self.config.curriculum.trials
        logger.info("🚀 开始训练: %s, 模式 %s, %d 次试验", self.params.variant, self.config.mode, total)
        for k in range(total):
            self.run_trial(k)
        if self.run_dir is not None:
            self._write_manifest()
        return TrainingOutcome(self.policy, self.model, list(self.records), self.run_dir)

    # ------------------------------------------------------------ 产物

    def _write_trial(self, record: TrialRecord):
        trial_dir = self.run_dir / f"trial_{record.trial}"
        try:
            if record.log is not None:
                record.log.to_csv(trial_dir / "episode.csv")
            save_cost_history(trial_dir / "cost_history.csv", record.history)
            if record.policy is not None:
                save_policy(trial_dir / "policy.json", record.policy)
            if self.model is not None:
                save_hyperparameters(
                    trial_dir / "model.json", self.model.hyps, self.sampling_time,
                    extra={"variant": self.params.variant, "dataset_rows": len(self.model.dataset)},
                )
        except OSError as e:
            logger.error("❌ 试验 %d 产物写入失败: %s", record.trial, e)
        self._write_manifest()

    def _write_manifest(self):
        trials = []
        for record in self.records:
            entry = record.summary()
            entry["dir"] = f"trial_{record.trial}"
            trials.append(entry)
        write_json(self.run_dir / "manifest.json", {
            "variant": self.params.variant,
            "mode": self.config.mode,
            "seed": self.config.seed,
            "config": "config.snapshot",
            "transitions": "transitions.db",
            "trials": trials,
            "performance": self.get_performance_report(),
        }, kind="run_manifest")

    def get_performance_report(self) -> Dict[str, Any]:
        """训练性能报告"""
        stats = self.performance_stats
        done = stats["trials_completed"] + stats["trials_failed"]
        return {
            "trials": {"completed": stats["trials_completed"], "failed": stats["trials_failed"], "total": done},
            "success_rate": stats["trials_completed"] / max(done, 1),
            "dataset_rows": len(self.memory),
            "time_seconds": {
                "model": stats["model_time"],
                "policy": stats["policy_time"],
                "execution": stats["execution_time"],
                "wall": time.time() - stats["start_time"],
            },
        }

    def close(self):
        self.memory.close()


def train(config: LabConfig, run_dir: Union[str, Path, None] = None) -> TrainingOutcome:
    """按配置运行完整训练 (mode 为 incremental 或 standard)"""
    session = TrainingSession(config, run_dir)
    try:
        return session.train()
    finally:
        session.close()


# ---------------------------------------------------------------- 运行目录读取

def trial_dirs(run_dir) -> List[Path]:
    """运行目录下的 trial_<k> 子目录, 按 k 排序"""
    dirs = [p for p in Path(run_dir).glob("trial_*") if p.is_dir() and p.name[len("trial_"):].isdigit()]
    return sorted(dirs, key=lambda p: int(p.name[len("trial_"):]))


def load_cost_histories(run_dir) -> List[pd.DataFrame]:
    return [pd.read_csv(d / "cost_history.csv") for d in trial_dirs(run_dir) if (d / "cost_history.csv").exists()]


def load_run_model(run_dir, config: LabConfig) -> GpModel:
    """用最后一个超参数检查点和运行目录的全部转移重建GP模型"""
    run_dir = Path(run_dir)
    checkpoints = [d / "model.json" for d in trial_dirs(run_dir) if (d / "model.json").exists()]
    db_path = run_dir / "transitions.db"
    if not checkpoints or not db_path.exists():
        raise CheckpointError(f"{run_dir} 中缺少模型检查点或转移记忆")
    hyps, sampling_time = load_hyperparameters(checkpoints[-1])
    memory = TransitionMemory(db_path, sampling_time=sampling_time)
    try:
        dataset = subset_of_data(memory.recall(), config.gp.max_points)
    finally:
        memory.close()
    return build_model(dataset, hyps, config.plant)
