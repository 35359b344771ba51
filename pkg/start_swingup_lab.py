#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : start_swingup_lab.py
@Time    : 2025年08月11日 09:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 一键启动双摆起摆实验室 - simulate / train / evaluate / benchmark / figures / check
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

# 添加项目根目录到路径
sys.path.append(str(Path(__file__).parent))

from control.controller import Controller, ControllerAssets
from control.lqr import calibrate_roa, design_lqr, load_lqr, save_lqr
from core.artifacts import write_csv
from core.config import LabConfig, load_config
from core.exceptions import SwingupLabError
from core.trainer import load_cost_histories, load_run_model, surrogate_distribution, train
from engine.autodiff import dump_trace_stats
from harness.benchmark import (
    BenchmarkEntry,
    learning_curve_data,
    rollout_figure_data,
    run_benchmark,
    save_benchmark,
)
from harness.evaluation import evaluate_episode, make_reset_schedule
from policy.particle_optimizer import particle_noise, rollout_objective, rollout_seeds, sample_initial_particles
from policy.rbf_policy import load_policy

logger = logging.getLogger(__name__)


def configure_logging(level: str = "INFO"):
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )


def build_assets(config: LabConfig, policy_path: Optional[str] = None, lqr_path: Optional[str] = None) -> ControllerAssets:
    """从检查点组装控制器资产; 启用LQR但没有文件时现场设计并标定ρ"""
    params = config.plant
    policy = load_policy(policy_path) if policy_path else None
    lqr = None
    if config.control.lqr_enabled:
        if lqr_path:
            lqr = load_lqr(lqr_path)
        else:
            lqr = design_lqr(params, config.control.lqr_q, config.control.lqr_r)
            rho = config.control.lqr_rho or calibrate_roa(params, lqr, seed=config.seed)
            lqr = lqr.with_rho(rho)
    return ControllerAssets.from_config(params, config.control, policy=policy, lqr=lqr)


class LabLauncher:
    """实验室启动器"""

    def __init__(self, args: argparse.Namespace):
        self.args = args
        overrides = {"mode": args.mode} if getattr(args, "mode", None) else None
        self.config = load_config(args.config, variant=args.variant, overrides=overrides)
        if args.seed is not None:
            self.config = self.config.model_copy(update={"seed": args.seed})
        self.out = Path(args.out)

    def simulate(self) -> int:
        assets = build_assets(self.config, self.args.policy, self.args.lqr)
        log, score = evaluate_episode(
            Controller(assets, "simulate"), self.config.plant, self.config.seed,
            schedule=[], config=self.config.harness, duration=self.args.duration,
        )
        path = log.to_csv(self.out / "episode.csv")
        print(f"✅ 仿真完成: {len(log)} 个样本, 得分 {score:.3f} (近似评分)")
        print(f"📁 日志: {path}")
        return 0

    def train(self) -> int:
        print(f"🚀 开始训练 {self.config.variant} ({self.config.mode}), 输出目录 {self.out}")
        outcome = train(self.config, self.out)
        failed = sum(1 for r in outcome.records if not r.success)
        print("-" * 60)
        for record in outcome.records:
            status = "✅" if record.success else "❌"
            print(f"{status} 试验 {record.trial:>2}  γ={record.gamma:.2f}  执行代价 {record.execution_cost:.3f}")
        print("-" * 60)
        print(f"📊 完成 {len(outcome.records)} 次试验, 失败 {failed} 次")
        if outcome.model is not None and self.config.control.lqr_enabled:
            assets = build_assets(self.config)
            save_lqr(self.out / "lqr.json", assets.lqr)
        return 0 if failed < len(outcome.records) else 1

    def evaluate(self) -> int:
        assets = build_assets(self.config, self.args.policy, self.args.lqr)
        harness = self.config.harness
        scores: List[float] = []
        for episode in range(self.args.episodes):
            seed = self.config.seed + episode
            schedule = make_reset_schedule(seed, harness.episode_duration, harness)
            log, score = evaluate_episode(Controller(assets, "evaluate"), self.config.plant, seed, schedule, harness)
            log.to_csv(self.out / f"episode_{episode}.csv")
            flag = " (发散截断)" if log.diverged else ""
            print(f"📊 回合 {episode}: 得分 {score:.3f}, 重置 {len(schedule)} 次{flag}")
            scores.append(score)
        print(f"✅ 平均得分 {sum(scores) / len(scores):.3f} (近似评分, 非官方公式)")
        return 0

    def benchmark(self) -> int:
        entries = []
        for item in self.args.controller or ["zero="]:
            name, _, policy_path = item.partition("=")
            assets = build_assets(self.config, policy_path or None, self.args.lqr)
            entries.append(BenchmarkEntry(name, assets))
        result = run_benchmark(
            entries, episodes=self.args.episodes, seed=self.config.seed,
            config=self.config.harness, workers=self.config.harness.workers,
        )
        paths = save_benchmark(result, self.out)
        print(result.format_table())
        print("⚠️ reference 列为公开报告的得分, 仅供参考, 不可直接比较")
        print(f"📁 得分表: {paths['json']}")
        return 0

    def figures(self) -> int:
        """绘图数据: 均匀起点的无重置回合; 给定 --run 时再导出学习曲线与梯度轨迹统计"""
        config = self.config
        assets = build_assets(config, self.args.policy, self.args.lqr)
        duration = self.args.duration or config.optimizer.horizon
        rollouts = rollout_figure_data(
            assets, episodes=self.args.episodes, seed=config.seed, duration=duration,
            start_bounds=config.curriculum.x_max(), config=config.harness,
        )
        print(f"📁 回合数据: {write_csv(self.out / 'rollouts.csv', rollouts)}")
        if not self.args.run:
            return 0

        run = Path(self.args.run)
        curves = learning_curve_data({config.mode: load_cost_histories(run)})
        print(f"📁 学习曲线: {write_csv(self.out / 'learning_curve.csv', curves)}")
        if assets.policy is not None:
            model = load_run_model(run, config)
            init_seed, noise_seed = rollout_seeds(config.seed)
            n = config.optimizer.n_particles
            x0 = sample_initial_particles(surrogate_distribution(1.0, config.curriculum.x_max()), n, init_seed)
            noise = particle_noise(n, config.horizon_steps, noise_seed)
            stats = dump_trace_stats(
                rollout_objective(model, x0, noise, config.optimizer), assets.policy, self.out / "trace_stats.json",
            )
            print(f"📊 梯度轨迹: {stats['nodes']} 个节点, Ĵ = {stats['value']:.3f}")
        return 0


def run_checks(include_slow: bool = False) -> int:
    import pytest

    tests_dir = str(Path(__file__).parent / "tests")
    argv = ["-q", tests_dir]
    if not include_slow:
        argv += ["-m", "not slow"]
    return int(pytest.main(argv))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swingup-lab", description="双摆起摆实验室")
    parser.add_argument("--log-level", default="INFO")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--variant", choices=["pendubot", "acrobot"], default=None)
        p.add_argument("--config", default=None, help="扁平 KEY=value 配置文件")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", default="runs/latest")
        p.add_argument("--mode", choices=["incremental", "standard"], default=None)
        return p

    p = common(sub.add_parser("simulate", help="单个无重置回合"))
    p.add_argument("--policy", default=None)
    p.add_argument("--lqr", default=None)
    p.add_argument("--duration", type=float, default=None)

    common(sub.add_parser("train", help="课程训练"))

    p = common(sub.add_parser("evaluate", help="带随机重置的评分回合"))
    p.add_argument("--policy", default=None)
    p.add_argument("--lqr", default=None)
    p.add_argument("--episodes", type=int, default=1)

    p = common(sub.add_parser("benchmark", help="得分表"))
    p.add_argument("--controller", action="append", help="name=policy.json, 可重复")
    p.add_argument("--lqr", default=None)
    p.add_argument("--episodes", type=int, default=1)

    p = common(sub.add_parser("figures", help="导出绘图数据"))
    p.add_argument("--policy", default=None)
    p.add_argument("--lqr", default=None)
    p.add_argument("--run", default=None, help="训练运行目录, 用于学习曲线与梯度轨迹统计")
    p.add_argument("--episodes", type=int, default=20)
    p.add_argument("--duration", type=float, default=None)

    p = sub.add_parser("check", help="运行测试套件")
    p.add_argument("--all", action="store_true", help="包含 slow 测试")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    """主函数"""
    args = build_parser().parse_args(argv)
    configure_logging(args.log_level)
    if args.command == "check":
        return run_checks(args.all)
    try:
        launcher = LabLauncher(args)
        return getattr(launcher, args.command)()
    except SwingupLabError as e:
        print(f"❌ {e}")
        return 2
    except KeyboardInterrupt:
        print("\n👋 收到中断信号, 正在退出...")
        return 130


if __name__ == "__main__":
    sys.exit(main())
