#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : conftest.py
@Time    : 2025年08月12日 09:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 测试公共夹具
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# 添加项目根目录到路径
sys.path.append(str(Path(__file__).parent.parent))

from models.gp_model import GpDataset, KernelHyp, build_model
from plant.dynamics import PlantParams


@pytest.fixture
def plant():
    return PlantParams()


@pytest.fixture
def acrobot():
    return PlantParams(variant="acrobot")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def _random_dataset(rng, n: int, sampling_time: float = 0.02) -> GpDataset:
    inputs = np.column_stack([
        rng.uniform(-np.pi, np.pi, (n, 2)),
        rng.uniform(-3.0, 3.0, (n, 2)),
        rng.uniform(-3.0, 3.0, n),
    ])
    targets = 0.05 * rng.standard_normal((n, 2))
    return GpDataset(inputs, targets, sampling_time)


@pytest.fixture
def make_dataset():
    """随机数据集工厂: make_dataset(rng, n, sampling_time)"""
    return _random_dataset


@pytest.fixture
def small_model(plant, rng):
    """30个随机样本上的GP, 超参数取固定值"""
    hyp = KernelHyp(np.array([1.5, 1.5, 3.0, 3.0, 2.0]), 0.01, 1e-4)
    return build_model(_random_dataset(rng, 30), (hyp, hyp), plant)
