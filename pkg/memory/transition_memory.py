#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : transition_memory.py
@Time    : 2025年08月05日 15:40:00
@Author  : 宝总
@Version : 1.0
@Desc    : 经验记忆 - sqlite持久化的状态转移存储, 为GP提供数据集
"""

import json
import logging
import sqlite3
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np
import pandas as pd

from core.artifacts import write_csv
from models.gp_model import DATASET_COLUMNS, GpDataset

logger = logging.getLogger(__name__)


@dataclass
class TrialEntry:
    """单次试验的记忆条目"""
    trial: int
    gamma: float
    rows: int
    success: bool
    payload: Dict[str, Any] = field(default_factory=dict)


class TransitionMemory:
    """
    转移记忆系统

    所有试验采集的 (x̃, Δ) 对按插入顺序保存在 transitions 表中,
    trials 表记录每次试验的摘要。召回时按插入顺序返回全部样本, 截断交给 subset_of_data。
    fresh=True 时打开即清空旧记录。
    """

    def __init__(self, db_path: Optional[str] = None, sampling_time: float = 0.02, fresh: bool = False):
        self.sampling_time = sampling_time
        self.db_path = ":memory:" if db_path is None else str(db_path)
        if self.db_path != ":memory:":
            Path(self.db_path).parent.mkdir(parents=True, exist_ok=True)
        self.conn = sqlite3.connect(self.db_path, check_same_thread=False)
        self._create_tables()
        if fresh:
            self.clear()

    def _create_tables(self):
        """创建数据表"""
        cursor = self.conn.cursor()
        cursor.execute("""
            CREATE TABLE IF NOT EXISTS transitions (
                id INTEGER PRIMARY KEY AUTOINCREMENT,
                trial INTEGER NOT NULL,
                q1 REAL, q2 REAL, qd1 REAL, qd2 REAL, u REAL,
                dv1 REAL, dv2 REAL
            )
        """)
        cursor.execute("""
            CREATE TABLE IF NOT EXISTS trials (
                trial INTEGER PRIMARY KEY,
                gamma REAL,
                rows INTEGER,
                success INTEGER,
                payload TEXT
            )
        """)
        self.conn.commit()

    def add_transitions(self, dataset: GpDataset, trial: int) -> int:
        """追加一批转移样本, 返回写入行数"""
        if len(dataset) == 0:
            return 0
        if not np.isclose(dataset.sampling_time, self.sampling_time):
            raise ValueError(
                f"采样时间 {dataset.sampling_time} 与记忆的 {self.sampling_time} 不一致"
            )
        rows = np.hstack([dataset.inputs, dataset.targets])
        cursor = self.conn.cursor()
        cursor.executemany(
            "INSERT INTO transitions (trial, q1, q2, qd1, qd2, u, dv1, dv2) VALUES (?, ?, ?, ?, ?, ?, ?, ?)",
            [(int(trial), *map(float, row)) for row in rows],
        )
        self.conn.commit()
        logger.debug("📊 试验%d 写入 %d 条转移", trial, len(rows))
        return len(rows)

    def record_trial(self, entry: TrialEntry):
        cursor = self.conn.cursor()
        cursor.execute(
            "INSERT OR REPLACE INTO trials (trial, gamma, rows, success, payload) VALUES (?, ?, ?, ?, ?)",
            (
                entry.trial,
                entry.gamma,
                entry.rows,
                int(entry.success),
                json.dumps(entry.payload, ensure_ascii=False),
            ),
        )
        self.conn.commit()

    def trials(self) -> List[TrialEntry]:
        cursor = self.conn.cursor()
        cursor.execute("SELECT trial, gamma, rows, success, payload FROM trials ORDER BY trial")
        return [
            TrialEntry(int(t), float(g), int(r), bool(s), json.loads(p or "{}"))
            for t, g, r, s, p in cursor.fetchall()
        ]

    def __len__(self) -> int:
        cursor = self.conn.cursor()
        cursor.execute("SELECT COUNT(*) FROM transitions")
        return int(cursor.fetchone()[0])

    def clear(self):
        """清空转移与试验记录, 自增序号归零"""
        stale = len(self)
        cursor = self.conn.cursor()
        cursor.execute("DELETE FROM transitions")
        cursor.execute("DELETE FROM trials")
        cursor.execute("DELETE FROM sqlite_sequence WHERE name = 'transitions'")
        self.conn.commit()
        if stale:
            logger.warning("⚠️ 清空旧的转移记忆: %d 条 (%s)", stale, self.db_path)

    def recall(self) -> GpDataset:
        """按插入顺序召回全部转移样本"""
        cursor = self.conn.cursor()
        cursor.execute(f"SELECT {', '.join(DATASET_COLUMNS)} FROM transitions ORDER BY id")
        rows = cursor.fetchall()
        if not rows:
            return GpDataset.empty(self.sampling_time)
        data = np.asarray(rows, dtype=float)
        return GpDataset(data[:, :5], data[:, 5:], self.sampling_time)

    def to_frame(self) -> pd.DataFrame:
        return pd.read_sql_query(
            f"SELECT trial, {', '.join(DATASET_COLUMNS)} FROM transitions ORDER BY id", self.conn
        )

    def export_csv(self, path) -> Path:
        return write_csv(path, self.to_frame())

    def generate_report(self) -> Dict[str, Any]:
        """按试验统计样本数与成功率"""
        cursor = self.conn.cursor()
        cursor.execute("SELECT trial, COUNT(*) FROM transitions GROUP BY trial ORDER BY trial")
        per_trial = {int(t): int(c) for t, c in cursor.fetchall()}
        entries = self.trials()
        return {
            "total_transitions": sum(per_trial.values()),
            "per_trial": per_trial,
            "trials": len(entries),
            "failed_trials": sum(1 for e in entries if not e.success),
        }

    def close(self):
        self.conn.close()
