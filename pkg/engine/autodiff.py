#!/usr/bin/env python3
# -*- coding: utf-8 -*-
"""
@File    : autodiff.py
@Time    : 2025年08月03日 09:30:00
@Author  : 宝总
@Version : 1.0
@Desc    : 反向模式自动微分引擎 - 在numpy数组上记录计算轨迹

用法与普通numpy代码一致: 把参数包装成 Var 后, 现有的 np.exp / np.tanh / @ 等调用
会经由 __array_ufunc__ / __array_function__ 协议被路由到已注册的原语并记录到 Trace 中。
未注册的原语在构造轨迹时立即抛出 UnsupportedPrimitiveError。
"""

import functools
import logging
from collections import Counter
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from core.artifacts import write_json
from core.exceptions import UnsupportedPrimitiveError

logger = logging.getLogger(__name__)


class Trace:
    """一次记录的计算轨迹 (单线程独占)"""

    def __init__(self):
        self._values: List[np.ndarray] = []
        self._parents: List[Tuple[Tuple[int, Callable, Tuple[int, ...]], ...]] = []
        self._names: List[str] = []

    def __len__(self) -> int:
        return len(self._values)

    def leaf(self, value) -> "Var":
        """创建叶子节点"""
        return self.record(np.array(value, dtype=float), (), "leaf")

    def record(self, value, parents, name: str) -> "Var":
        node_id = len(self._values)
        self._values.append(value)
        self._parents.append(tuple(parents))
        self._names.append(name)
        return Var(value, self, node_id)

    def backward(self, output: "Var") -> Dict[int, np.ndarray]:
        """从标量输出反向累积梯度, 返回 node_id -> 梯度"""
        if output.trace is not self:
            raise ValueError("输出不属于当前轨迹")
        if np.size(output.value) != 1:
            raise ValueError("只能对标量输出求梯度")

        grads: Dict[int, np.ndarray] = {output.node_id: np.ones_like(output.value)}
        # 节点按创建顺序即为拓扑序
        for node_id in range(output.node_id, -1, -1):
            g = grads.get(node_id)
            if g is None:
                continue
            for parent_id, vjp, parent_shape in self._parents[node_id]:
                contribution = _unbroadcast(vjp(g), parent_shape)
                if parent_id in grads:
                    grads[parent_id] = grads[parent_id] + contribution
                else:
                    grads[parent_id] = contribution
            if self._parents[node_id]:
                # 中间节点梯度用完即释放
                del grads[node_id]
        return grads

    def stats(self) -> Dict[str, Any]:
        """轨迹统计: 各原语节点数与存储字节数"""
        counts = Counter(self._names)
        stored = sum(int(np.asarray(v).nbytes) for v in self._values)
        return {
            "nodes": len(self._values),
            "stored_bytes": stored,
            "primitives": dict(sorted(counts.items())),
        }


class Var:
    """带轨迹句柄的可微数组"""

    __slots__ = ("value", "trace", "node_id")
    __array_priority__ = 1000.0

    def __init__(self, value, trace: Trace, node_id: int):
        self.value = value
        self.trace = trace
        self.node_id = node_id

    def __repr__(self) -> str:
        return f"Var(shape={np.shape(self.value)}, node={self.node_id})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return np.shape(self.value)

    @property
    def ndim(self) -> int:
        return np.ndim(self.value)

    @property
    def size(self) -> int:
        return int(np.size(self.value))

    @property
    def T(self) -> "Var":
        return transpose(self)

    def __len__(self) -> int:
        return len(self.value)

    def __array_ufunc__(self, ufunc, method, *inputs, **kwargs):
        if method != "__call__" or "out" in kwargs:
            raise UnsupportedPrimitiveError(f"{ufunc.__name__}.{method}")
        prim = _UFUNCS.get(ufunc)
        if prim is None:
            raise UnsupportedPrimitiveError(ufunc.__name__)
        return prim(*inputs, **kwargs)

    def __array_function__(self, func, types, args, kwargs):
        prim = _FUNCTIONS.get(func)
        if prim is None:
            raise UnsupportedPrimitiveError(getattr(func, "__name__", str(func)))
        return prim(*args, **kwargs)

    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return subtract(self, other)

    def __rsub__(self, other):
        return subtract(other, self)

    def __mul__(self, other):
        return multiply(self, other)

    def __rmul__(self, other):
        return multiply(other, self)

    def __truediv__(self, other):
        return divide(self, other)

    def __rtruediv__(self, other):
        return divide(other, self)

    def __neg__(self):
        return negative(self)

    def __pos__(self):
        return self

    def __pow__(self, exponent):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)

    def __getitem__(self, index):
        return getitem(self, index)

    # 比较运算只返回常量掩码
    def __lt__(self, other):
        return self.value < _raw(other)

    def __le__(self, other):
        return self.value <= _raw(other)

    def __gt__(self, other):
        return self.value > _raw(other)

    def __ge__(self, other):
        return self.value >= _raw(other)

    def sum(self, axis=None, keepdims: bool = False) -> "Var":
        return sum_(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims: bool = False) -> "Var":
        return mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape) -> "Var":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)


def _raw(x):
    return x.value if isinstance(x, Var) else x


def _find_trace(args) -> Optional[Trace]:
    for a in args:
        if isinstance(a, Var):
            return a.trace
    return None


def _unbroadcast(grad, shape) -> np.ndarray:
    """把广播后的梯度求和回原始形状"""
    grad = np.asarray(grad)
    if grad.shape == tuple(shape):
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad.reshape(shape)


_VJPS: Dict[Callable, Tuple[Optional[Callable], ...]] = {}


def primitive(fn: Callable) -> Callable:
    """把一个作用于ndarray的函数注册为可微原语"""

    @functools.wraps(fn)
    def wrapped(*args, **kwargs):
        trace = _find_trace(args)
        if trace is None:
            return fn(*args, **kwargs)
        raw = tuple(_raw(a) for a in args)
        ans = fn(*raw, **kwargs)
        makers = _VJPS.get(wrapped, ())
        parents = []
        for i, a in enumerate(args):
            if not isinstance(a, Var):
                continue
            if a.trace is not trace:
                raise ValueError("不能混用不同轨迹上的变量")
            maker = makers[i] if i < len(makers) else None
            if maker is None:
                raise UnsupportedPrimitiveError(fn.__name__, f"第{i}个参数不可微")
            parents.append((a.node_id, maker(ans, *raw, **kwargs), np.shape(a.value)))
        return trace.record(ans, parents, fn.__name__)

    wrapped.raw_fn = fn
    return wrapped


def defvjp(prim: Callable, *makers: Optional[Callable]) -> None:
    """为原语的每个位置参数注册VJP构造器 maker(ans, *args) -> (g -> grad)"""
    _VJPS[prim] = makers


# ---------------------------------------------------------------- 逐元素原语

add = primitive(np.add)
defvjp(add, lambda ans, a, b: lambda g: g, lambda ans, a, b: lambda g: g)

subtract = primitive(np.subtract)
defvjp(subtract, lambda ans, a, b: lambda g: g, lambda ans, a, b: lambda g: -g)

multiply = primitive(np.multiply)
defvjp(multiply, lambda ans, a, b: lambda g: g * b, lambda ans, a, b: lambda g: g * a)

divide = primitive(np.true_divide)
defvjp(
    divide,
    lambda ans, a, b: lambda g: g / b,
    lambda ans, a, b: lambda g: -g * ans / b,
)

negative = primitive(np.negative)
defvjp(negative, lambda ans, a: lambda g: -g)

positive = primitive(np.positive)
defvjp(positive, lambda ans, a: lambda g: g)

power = primitive(np.power)
defvjp(
    power,
    lambda ans, a, b: lambda g: g * b * np.power(a, b - 1),
    lambda ans, a, b: lambda g: g * ans * np.log(np.where(a > 0, a, 1.0)),
)

square = primitive(np.square)
defvjp(square, lambda ans, a: lambda g: 2.0 * g * a)


def _sqrt_vjp(ans, a):
    # sqrt(0) 处取零次梯度
    safe = np.where(ans > 0, ans, 1.0)
    return lambda g: np.where(ans > 0, 0.5 * g / safe, 0.0)


sqrt = primitive(np.sqrt)
defvjp(sqrt, _sqrt_vjp)

exp = primitive(np.exp)
defvjp(exp, lambda ans, a: lambda g: g * ans)

log = primitive(np.log)
defvjp(log, lambda ans, a: lambda g: g / a)

tanh = primitive(np.tanh)
defvjp(tanh, lambda ans, a: lambda g: g * (1.0 - ans * ans))

sin = primitive(np.sin)
defvjp(sin, lambda ans, a: lambda g: g * np.cos(a))

cos = primitive(np.cos)
defvjp(cos, lambda ans, a: lambda g: -g * np.sin(a))

absolute = primitive(np.absolute)
defvjp(absolute, lambda ans, a: lambda g: g * np.sign(a))

maximum = primitive(np.maximum)
defvjp(
    maximum,
    lambda ans, a, b: lambda g: g * (a >= b),
    lambda ans, a, b: lambda g: g * (a < b),
)

minimum = primitive(np.minimum)
defvjp(
    minimum,
    lambda ans, a, b: lambda g: g * (a <= b),
    lambda ans, a, b: lambda g: g * (a > b),
)

remainder = primitive(np.remainder)
defvjp(
    remainder,
    lambda ans, a, b: lambda g: g,
    lambda ans, a, b: lambda g: -g * np.floor(a / b),
)

floor = primitive(np.floor)
defvjp(floor, lambda ans, a: lambda g: np.zeros_like(a))


def _matmul_vjp_a(ans, a, b):
    def vjp(g):
        if np.ndim(b) == 1:
            return np.multiply.outer(g, b) if np.ndim(a) > 1 else g * b
        if np.ndim(a) == 1:
            return b @ g
        return g @ np.swapaxes(b, -1, -2)
    return vjp


def _matmul_vjp_b(ans, a, b):
    def vjp(g):
        if np.ndim(a) == 1:
            return np.multiply.outer(a, g) if np.ndim(b) > 1 else g * a
        if np.ndim(b) == 1:
            return np.swapaxes(a, -1, -2) @ g
        return np.swapaxes(a, -1, -2) @ g
    return vjp


matmul = primitive(np.matmul)
defvjp(matmul, _matmul_vjp_a, _matmul_vjp_b)


# ---------------------------------------------------------------- 形状与归约原语

def _sum(a, axis=None, keepdims=False):
    return np.sum(a, axis=axis, keepdims=keepdims)


def _sum_vjp(ans, a, axis=None, keepdims=False):
    shape = np.shape(a)

    def vjp(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return np.broadcast_to(g, shape)
    return vjp


_sum.__name__ = "sum"
sum_ = primitive(_sum)
defvjp(sum_, _sum_vjp)


def mean(a, axis=None, keepdims: bool = False):
    count = np.size(_raw(a)) if axis is None else np.prod(
        [np.shape(_raw(a))[ax] for ax in np.atleast_1d(axis)]
    )
    return sum_(a, axis=axis, keepdims=keepdims) / float(count)


def _reshape(a, shape):
    return np.reshape(a, shape)


_reshape.__name__ = "reshape"
reshape = primitive(_reshape)
defvjp(reshape, lambda ans, a, shape: lambda g: np.reshape(g, np.shape(a)))


def _transpose(a):
    return np.transpose(a)


_transpose.__name__ = "transpose"
transpose = primitive(_transpose)
defvjp(transpose, lambda ans, a: lambda g: np.transpose(g))


def _getitem(a, index):
    return a[index]


def _getitem_vjp(ans, a, index):
    def vjp(g):
        out = np.zeros(np.shape(a))
        np.add.at(out, index, g)
        return out
    return vjp


_getitem.__name__ = "getitem"
getitem = primitive(_getitem)
defvjp(getitem, _getitem_vjp)


def _where(condition, a, b):
    return np.where(condition, a, b)


_where.__name__ = "where"
where = primitive(_where)
defvjp(
    where,
    None,
    lambda ans, c, a, b: lambda g: np.where(c, g, 0.0),
    lambda ans, c, a, b: lambda g: np.where(c, 0.0, g),
)


def _clip(a, a_min, a_max):
    return np.clip(a, a_min, a_max)


_clip.__name__ = "clip"
clip = primitive(_clip)
defvjp(clip, lambda ans, a, lo, hi: lambda g: g * ((a >= lo) & (a <= hi)))


def concatenate(arrays: Sequence, axis: int = 0):
    """沿axis拼接, 可混合常量与Var"""
    trace = _find_trace(arrays)
    raw = [np.asarray(_raw(a), dtype=float) for a in arrays]
    ans = np.concatenate(raw, axis=axis)
    if trace is None:
        return ans
    bounds = np.cumsum([r.shape[axis] for r in raw])[:-1]
    parents = []
    for i, a in enumerate(arrays):
        if isinstance(a, Var):
            def vjp(g, i=i):
                return np.split(g, bounds, axis=axis)[i]
            parents.append((a.node_id, vjp, np.shape(a.value)))
    return trace.record(ans, parents, "concatenate")


def stack(arrays: Sequence, axis: int = 0):
    """沿新轴堆叠"""
    expanded = [
        reshape(a, np.expand_dims(a.value, axis).shape) if isinstance(a, Var)
        else np.expand_dims(np.asarray(a, dtype=float), axis)
        for a in arrays
    ]
    return concatenate(expanded, axis=axis)


# ---------------------------------------------------------------- 融合原语 (控制轨迹内存)

def _se_cross_kernel(x, points, inv_lengthscale2, signal_var):
    """k[n, m] = σ_f² exp(-½ Σ_d (x_nd - X_md)² / ℓ_d²)"""
    xs = x * np.sqrt(inv_lengthscale2)
    ps = points * np.sqrt(inv_lengthscale2)
    sqdist = (
        np.sum(xs * xs, axis=1)[:, None]
        + np.sum(ps * ps, axis=1)[None, :]
        - 2.0 * xs @ ps.T
    )
    return signal_var * np.exp(-0.5 * np.maximum(sqdist, 0.0))


def _se_cross_kernel_vjp(ans, x, points, inv_lengthscale2, signal_var):
    def vjp(g):
        gk = g * ans
        return (gk @ points - x * gk.sum(axis=1, keepdims=True)) * inv_lengthscale2
    return vjp


_se_cross_kernel.__name__ = "se_cross_kernel"
se_cross_kernel = primitive(_se_cross_kernel)
defvjp(se_cross_kernel, _se_cross_kernel_vjp)


def _fixed_quad_form(k, chol_lower):
    """q_n = k_n Γ⁻¹ k_nᵀ, Γ = L Lᵀ 在优化期间固定"""
    v = linalg.solve_triangular(chol_lower, k.T, lower=True, check_finite=False)
    return np.sum(v * v, axis=0)


def _fixed_quad_form_vjp(ans, k, chol_lower):
    def vjp(g):
        # 反向时重新求解, 不在轨迹中保存中间量
        solved = linalg.cho_solve((chol_lower, True), k.T, check_finite=False)
        return 2.0 * g[:, None] * solved.T
    return vjp


_fixed_quad_form.__name__ = "fixed_quad_form"
fixed_quad_form = primitive(_fixed_quad_form)
defvjp(fixed_quad_form, _fixed_quad_form_vjp, None)


_UFUNCS: Dict[Any, Callable] = {
    np.add: add,
    np.subtract: subtract,
    np.multiply: multiply,
    np.true_divide: divide,
    np.negative: negative,
    np.positive: positive,
    np.power: power,
    np.square: square,
    np.sqrt: sqrt,
    np.exp: exp,
    np.log: log,
    np.tanh: tanh,
    np.sin: sin,
    np.cos: cos,
    np.absolute: absolute,
    np.maximum: maximum,
    np.minimum: minimum,
    np.remainder: remainder,
    np.floor: floor,
    np.matmul: matmul,
}

_FUNCTIONS: Dict[Any, Callable] = {
    np.sum: sum_,
    np.mean: mean,
    np.reshape: reshape,
    np.transpose: transpose,
    np.where: where,
    np.clip: clip,
    np.concatenate: concatenate,
    np.stack: stack,
}


# ---------------------------------------------------------------- 对外接口

@dataclass
class FiniteDiffReport:
    """有限差分校验报告"""
    step: float
    tolerance: float
    max_relative_error: float
    analytic: np.ndarray
    numeric: np.ndarray
    checked_components: int
    passed: bool
    flags: List[str] = field(default_factory=list)
    coarse_relative_error: Optional[float] = None

    def summary(self) -> Dict[str, Any]:
        return {
            "step": self.step,
            "tolerance": self.tolerance,
            "max_relative_error": self.max_relative_error,
            "checked_components": self.checked_components,
            "passed": self.passed,
            "flags": list(self.flags),
            "coarse_relative_error": self.coarse_relative_error,
        }


def _tensors_of(params) -> Tuple[np.ndarray, ...]:
    if isinstance(params, np.ndarray):
        return (params,)
    return tuple(params.tensors())


def _rebuild(params, tensors):
    if isinstance(params, np.ndarray):
        return tensors[0]
    return params.with_tensors(*tensors)


def _flatten(tensors) -> np.ndarray:
    return np.concatenate([np.ravel(np.asarray(t, dtype=float)) for t in tensors])


def _unflatten(flat: np.ndarray, like) -> Tuple[np.ndarray, ...]:
    out, offset = [], 0
    for t in like:
        size = int(np.size(t))
        out.append(flat[offset:offset + size].reshape(np.shape(t)))
        offset += size
    return tuple(out)


def record_and_grad(fn: Callable, params, return_stats: bool = False):
    """
    记录 fn(params) 的计算轨迹并反向求梯度

    params 可以是 ndarray, 或实现 tensors()/with_tensors(*arrays) 的参数对象
    (例如 PolicyParams)。返回 (value, flat_grad), 梯度按 tensors() 顺序展平。
    """
    trace = Trace()
    tensors = _tensors_of(params)
    leaves = tuple(trace.leaf(t) for t in tensors)
    out = fn(_rebuild(params, leaves))

    if not isinstance(out, Var):
        value = float(np.asarray(out))
        grad = np.zeros(sum(int(np.size(t)) for t in tensors))
    else:
        value = float(np.asarray(out.value))
        grads = trace.backward(out)
        grad = _flatten([
            grads.get(leaf.node_id, np.zeros(np.shape(leaf.value))) for leaf in leaves
        ])

    if return_stats:
        return value, grad, trace.stats()
    return value, grad


def _central_difference(fn: Callable, params, step: float) -> np.ndarray:
    tensors = _tensors_of(params)
    theta = _flatten(tensors)
    numeric = np.zeros_like(theta)
    for i in range(theta.size):
        plus, minus = theta.copy(), theta.copy()
        plus[i] += step
        minus[i] -= step
        f_plus = float(np.asarray(fn(_rebuild(params, _unflatten(plus, tensors)))))
        f_minus = float(np.asarray(fn(_rebuild(params, _unflatten(minus, tensors)))))
        numeric[i] = (f_plus - f_minus) / (2.0 * step)
    return numeric


def _relative_error(analytic: np.ndarray, numeric: np.ndarray, min_magnitude: float) -> Tuple[float, int]:
    scale = np.maximum(np.abs(analytic), np.abs(numeric))
    mask = scale > min_magnitude
    if not mask.any():
        return 0.0, 0
    return float(np.max(np.abs(analytic[mask] - numeric[mask]) / scale[mask])), int(mask.sum())


def finite_diff_check(
    fn: Callable,
    params,
    step: float = 1e-5,
    tolerance: float = 1e-4,
    min_magnitude: float = 1e-6,
    coarse_factor: float = 100.0,
) -> FiniteDiffReport:
    """
    中心差分梯度与引擎梯度逐分量比较

    未通过时再用 coarse_factor 倍步长测一次: 误差随步长增大而明显下降,
    说明误差来自舍入相消, 标记 cancellation; 否则视为真实不一致。
    """
    if step <= 0:
        raise ValueError("step 必须为正")
    _, analytic = record_and_grad(fn, params)
    numeric = _central_difference(fn, params, step)
    max_rel, checked = _relative_error(analytic, numeric, min_magnitude)

    flags = []
    passed = max_rel < tolerance
    coarse_error = None
    if not passed:
        flags.append("mismatch")
        coarse = _central_difference(fn, params, step * coarse_factor)
        coarse_error, _ = _relative_error(analytic, coarse, min_magnitude)
        if coarse_error < 0.1 * max_rel:
            flags.append("cancellation")
    if not np.all(np.isfinite(numeric)):
        flags.append("non_finite")

    return FiniteDiffReport(
        step=step,
        tolerance=tolerance,
        max_relative_error=max_rel,
        analytic=analytic,
        numeric=numeric,
        checked_components=checked,
        passed=passed,
        flags=flags,
        coarse_relative_error=coarse_error,
    )


def dump_trace_stats(fn: Callable, params, path) -> Dict[str, Any]:
    """记录一次轨迹并把节点统计写成JSON, 用于性能分析"""
    value, _, stats = record_and_grad(fn, params, return_stats=True)
    stats["value"] = value
    write_json(path, stats, kind="trace_stats")
    logger.info("📊 轨迹统计: %d 个节点, %.1f MB", stats["nodes"], stats["stored_bytes"] / 1e6)
    return stats
