#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : exceptions.py
@Time    : 2025年08月02日 10:00:00
@Author  : 宝总
@Version : 1.0
@Desc    : 统一异常层级
"""

from typing import Optional


class SwingupLabError(Exception):
    """所有项目异常的基类"""


class ConfigError(SwingupLabError):
    """配置文件缺失字段、未知键或取值非法"""


class UnsupportedPrimitiveError(SwingupLabError):
    """计算图中出现了梯度引擎不支持的numpy原语"""

    def __init__(self, primitive: str, detail: str = ""):
        self.primitive = primitive
        message = f"梯度引擎不支持原语 '{primitive}'"
        if detail:
            message += f": {detail}"
        super().__init__(message)


class FactorizationError(SwingupLabError):
    """加入最大抖动后Cholesky分解仍失败"""

    def __init__(self, message: str, jitter: Optional[float] = None):
        self.jitter = jitter
        super().__init__(message)


class RiccatiError(SwingupLabError):
    """Riccati方程迭代未收敛"""

    def __init__(self, residual: float, iterations: int):
        self.residual = residual
        self.iterations = iterations
        super().__init__(f"Riccati迭代{iterations}次后未收敛, 残差范数 {residual:.3e}")


class TimestampError(SwingupLabError):
    """日志时间戳不是均匀采样"""


class CheckpointError(SwingupLabError):
    """JSON产物的schema版本或形状不匹配"""


class ConvergenceWarning(UserWarning):
    """数值优化未在最大迭代次数内收敛, 返回当前最优迭代"""
