#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : episode_log.py
@Time    : 2025年08月07日 10:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 均匀采样的回合日志, CSV表头固定为 t,q1,q2,qd1,qd2,u,mode
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from core.artifacts import write_csv
from core.exceptions import TimestampError
from plant.simulator import SimulationTrace

EPISODE_COLUMNS = ["t", "q1", "q2", "qd1", "qd2", "u", "mode"]
RESET_MODE = "RESET"


@dataclass
class EpisodeLog:
    """t (L,), states (L, 4), torques (L,), modes (L,) 以及元数据"""
    t: np.ndarray
    states: np.ndarray
    torques: np.ndarray
    modes: np.ndarray
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        self.t = np.asarray(self.t, dtype=float)
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 4)
        self.torques = np.asarray(self.torques, dtype=float)
        self.modes = np.asarray(self.modes, dtype=object)
        if not (len(self.t) == len(self.states) == len(self.torques) == len(self.modes)):
            raise ValueError("日志各列长度不一致")

    def __len__(self) -> int:
        return len(self.t)

    @property
    def duration(self) -> float:
        return float(self.t[-1] - self.t[0]) if len(self) > 1 else 0.0

    @property
    def dt(self) -> float:
        if len(self) < 2:
            raise TimestampError("日志少于两个样本, 无法确定采样间隔")
        return float(self.t[1] - self.t[0])

    @property
    def reset_active(self) -> np.ndarray:
        return self.modes == RESET_MODE

    @property
    def diverged(self) -> bool:
        return bool(self.metadata.get("diverged", False))

    def check_uniform(self, dt: Optional[float] = None, rtol: float = 1e-6):
        """时间戳必须严格递增且等间隔 (给定 dt 时还须等于 dt)"""
        if len(self) < 2:
            return
        steps = np.diff(self.t)
        expected = self.dt if dt is None else dt
        if np.any(steps <= 0) or not np.allclose(steps, expected, rtol=rtol, atol=1e-12):
            raise TimestampError(
                f"时间戳不是以 {expected} s 均匀采样 (最小 {steps.min():.6g}, 最大 {steps.max():.6g})"
            )

    def subsample(self, stride: int) -> "EpisodeLog":
        if stride < 1:
            raise ValueError("stride 必须 ≥ 1")
        index = slice(None, None, stride)
        return EpisodeLog(
            self.t[index], self.states[index], self.torques[index], self.modes[index], dict(self.metadata)
        )

    @classmethod
    def from_trace(cls, trace: SimulationTrace, mode: str = "POLICY", stride: int = 1, **metadata) -> "EpisodeLog":
        log = cls(trace.t, trace.states, trace.torques, np.full(len(trace.t), mode, dtype=object), metadata)
        return log.subsample(stride) if stride > 1 else log

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=EPISODE_COLUMNS[1:5])
        frame.insert(0, "t", self.t)
        frame["u"] = self.torques
        frame["mode"] = self.modes
        return frame[EPISODE_COLUMNS]

    def to_csv(self, path):
        return write_csv(path, self.to_frame())

    @classmethod
    def from_csv(cls, path, **metadata) -> "EpisodeLog":
        frame = pd.read_csv(path)
        missing = [c for c in EPISODE_COLUMNS if c not in frame.columns]
        if missing:
            raise ValueError(f"回合CSV缺少列: {missing}")
        return cls(
            frame["t"].to_numpy(),
            frame[["q1", "q2", "qd1", "qd2"]].to_numpy(),
            frame["u"].to_numpy(),
            frame["mode"].astype(str).to_numpy(dtype=object),
            metadata,
        )
