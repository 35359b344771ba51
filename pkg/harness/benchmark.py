#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : benchmark.py
@Time    : 2025年08月09日 15:30:00
@Author  : 宝总
@Version : 1.0
@Desc    : 得分表与绘图数据导出
"""

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from control.controller import Controller, ControllerAssets
from core.artifacts import write_csv, write_json
from core.config import HarnessConfig
from plant.dynamics import JointState

from .evaluation import evaluate_episode, make_reset_schedule

logger = logging.getLogger(__name__)

SCORE_COLUMNS = ["controller", "variant", "seed", "score", "resets", "diverged"]

# 公开报告的得分, 仅作参考, 本仓库的得分是近似评分
REFERENCE_SCORES: Dict[Tuple[str, str], float] = {
    ("policy-incremental", "pendubot"): 0.468,
    ("policy-incremental", "acrobot"): 0.292,
    ("policy-standard", "pendubot"): 0.1,
    ("policy-standard", "acrobot"): 0.21,
    ("tvlqr", "pendubot"): 0.094,
    ("tvlqr", "acrobot"): 0.073,
}


@dataclass(frozen=True)
class BenchmarkEntry:
    """参与评测的控制器: 名称 + 不可变资产"""
    name: str
    assets: ControllerAssets


@dataclass
class BenchmarkResult:
    rows: pd.DataFrame
    summary: pd.DataFrame

    def format_table(self) -> str:
        return self.summary.to_string(index=False, float_format=lambda v: f"{v:.3f}")

    def to_dict(self) -> dict:
        reference = [
            {"controller": c, "variant": v, "score": s}
            for (c, v), s in REFERENCE_SCORES.items()
        ]
        return {
            "rows": _records(self.rows[SCORE_COLUMNS + ["failed"]]),
            "summary": _records(self.summary),
            "reference_scores": reference,
            "score_note": "approximate competition score: fraction of time inside the success region",
        }


def _records(frame: pd.DataFrame) -> List[dict]:
    return json.loads(frame.to_json(orient="records"))


def episode_seeds(seed: int, episodes: int) -> List[int]:
    """由基准种子派生每个回合的整数种子"""
    children = np.random.SeedSequence(seed).spawn(episodes)
    return [int(c.generate_state(1)[0]) for c in children]


def _run_one(entry: BenchmarkEntry, seed: int, config: HarnessConfig) -> dict:
    params = entry.assets.params
    row = {"controller": entry.name, "variant": params.variant, "seed": seed}
    try:
        schedule = make_reset_schedule(seed, config.episode_duration, config)
        log, score = evaluate_episode(Controller(entry.assets, entry.name), params, seed, schedule, config)
        row.update(score=score, resets=len(schedule), diverged=log.diverged, failed=False)
    except Exception as e:
        logger.error("❌ 控制器 %s 种子 %d 评测失败: %s", entry.name, seed, e)
        row.update(score=np.nan, resets=0, diverged=False, failed=True)
    return row


def summarize(rows: pd.DataFrame) -> pd.DataFrame:
    """每个 (控制器, 变体) 的均值/标准差, 失败回合不计入均值"""
    groups = []
    for (controller, variant), group in rows.groupby(["controller", "variant"], sort=False):
        ok = group[~group["failed"]]
        groups.append({
            "controller": controller,
            "variant": variant,
            "episodes": len(ok),
            "failures": int(group["failed"].sum()),
            "mean_score": float(ok["score"].mean()) if len(ok) else np.nan,
            "std_score": float(ok["score"].std(ddof=0)) if len(ok) else np.nan,
            "diverged": int(ok["diverged"].sum()),
            "reference": REFERENCE_SCORES.get((controller, variant), np.nan),
        })
    return pd.DataFrame(groups)


def run_benchmark(
    entries: Sequence[BenchmarkEntry],
    episodes: int = 1,
    seed: int = 0,
    config: Optional[HarnessConfig] = None,
    workers: int = 1,
) -> BenchmarkResult:
    """所有控制器在相同的回合种子上评测; 并行与串行结果一致"""
    if not entries:
        raise ValueError("至少需要一个控制器")
    config = config or HarnessConfig()
    seeds = episode_seeds(seed, episodes)
    jobs = [(entry, s) for entry in entries for s in seeds]
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda job: _run_one(job[0], job[1], config), jobs))
    else:
        rows = [_run_one(entry, s, config) for entry, s in jobs]
    frame = pd.DataFrame(rows, columns=SCORE_COLUMNS + ["failed"])
    result = BenchmarkResult(frame, summarize(frame))
    logger.info("📊 评测完成: %d 个控制器 × %d 回合", len(entries), episodes)
    return result


def save_benchmark(result: BenchmarkResult, out_dir) -> Dict[str, Path]:
    out_dir = Path(out_dir)
    return {
        "json": write_json(out_dir / "scores.json", result.to_dict(), kind="score_table"),
        "csv": write_csv(out_dir / "scores.csv", result.rows[SCORE_COLUMNS]),
    }


# ---------------------------------------------------------------- 绘图数据

def rollout_figure_data(
    assets: ControllerAssets,
    episodes: int = 20,
    seed: int = 0,
    duration: float = 3.0,
    start_bounds: Sequence[float] = (np.pi, np.pi, 0.005, 0.005),
    config: Optional[HarnessConfig] = None,
) -> pd.DataFrame:
    """从均匀初始状态出发的多条无重置回合, 长格式 (episode + 回合CSV列)"""
    config = config or HarnessConfig()
    rng = np.random.default_rng(seed)
    bounds = np.asarray(start_bounds, dtype=float)
    frames = []
    for episode in range(episodes):
        start = JointState.from_vector(rng.uniform(-bounds, bounds))
        log, _ = evaluate_episode(
            Controller(assets), assets.params, seed, schedule=[], config=config, start=start, duration=duration,
        )
        frame = log.to_frame()
        frame.insert(0, "episode", episode)
        frames.append(frame)
    return pd.concat(frames, ignore_index=True)


def learning_curve_data(histories: Dict[str, Sequence[pd.DataFrame]]) -> pd.DataFrame:
    """
    把多组代价历史叠成长表: label, trial, step, J_hat

    histories 的键是曲线标签 (例如 incremental / standard), 值按试验顺序排列。
    """
    frames = []
    for label, per_trial in histories.items():
        for trial, history in enumerate(per_trial):
            frame = history[["step", "J_hat"]].copy()
            frame.insert(0, "trial", trial)
            frame.insert(0, "label", label)
            frames.append(frame)
    if not frames:
        return pd.DataFrame(columns=["label", "trial", "step", "J_hat"])
    return pd.concat(frames, ignore_index=True)
