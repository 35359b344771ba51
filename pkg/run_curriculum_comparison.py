#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : run_curriculum_comparison.py
@Time    : 2025年08月11日 15:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 递增初始分布 vs 标准训练的成对对比实验

对每个种子分别以 incremental / standard 模式训练, 记录代价历史与最终执行代价,
按多数投票给出 "incremental 最终代价 ≤ standard 最终代价" 是否成立。
"""

import argparse
import json
import sys
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd

# 添加项目根目录到路径
sys.path.append(str(Path(__file__).parent))

from core.artifacts import write_csv, write_json
from core.config import LabConfig, load_config
from core.trainer import TrainingOutcome, train
from harness.benchmark import learning_curve_data
from start_swingup_lab import configure_logging

MODES = ("incremental", "standard")


def final_cost(outcome: TrainingOutcome) -> float:
    """最后一次成功试验的执行代价"""
    costs = [r.execution_cost for r in outcome.records if r.success and np.isfinite(r.execution_cost)]
    return float(costs[-1]) if costs else float("nan")


def compare(base: LabConfig, seeds: List[int], out_dir: Path) -> Dict:
    """逐种子成对训练并汇总"""
    rows = []
    histories: Dict[str, list] = {}
    for seed in seeds:
        costs = {}
        for mode in MODES:
            config = base.model_copy(update={"seed": seed, "mode": mode})
            print(f"🚀 种子 {seed} · {mode}")
            outcome = train(config, out_dir / f"seed_{seed}" / mode)
            costs[mode] = final_cost(outcome)
            histories[f"{mode}/seed_{seed}"] = [r.history for r in outcome.records]
        incremental_wins = bool(costs["incremental"] <= costs["standard"])
        rows.append({"seed": seed, **{f"final_{m}": costs[m] for m in MODES}, "incremental_wins": incremental_wins})
        status = "✅" if incremental_wins else "⚠️"
        print(f"{status} 种子 {seed}: incremental {costs['incremental']:.3f} / standard {costs['standard']:.3f}")

    table = pd.DataFrame(rows)
    wins = int(table["incremental_wins"].sum())
    verdict = {
        "seeds": seeds,
        "variant": base.variant,
        "incremental_wins": wins,
        "majority": bool(wins * 2 > len(seeds)),
        "runs": json.loads(table.to_json(orient="records")),
    }
    write_csv(out_dir / "final_costs.csv", table)
    write_csv(out_dir / "learning_curves.csv", learning_curve_data(histories))
    write_json(out_dir / "verdict.json", verdict, kind="curriculum_comparison")
    return verdict


def main(argv: Optional[List[str]] = None) -> int:
    parser = argparse.ArgumentParser(description="incremental vs standard 成对对比")
    parser.add_argument("--variant", choices=["pendubot", "acrobot"], default="pendubot")
    parser.add_argument("--config", default=None)
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--out", default="runs/curriculum_comparison")
    parser.add_argument("--log-level", default="INFO")
    args = parser.parse_args(argv)

    configure_logging(args.log_level)
    base = load_config(args.config, variant=args.variant)
    verdict = compare(base, args.seeds, Path(args.out))
    print("-" * 60)
    print(f"📊 incremental 胜出 {verdict['incremental_wins']}/{len(args.seeds)}, 多数票: {verdict['majority']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
