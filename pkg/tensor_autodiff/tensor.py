"""
张量与可微运算
基于 numpy 的稠密双精度张量，所有运算通过计算带记录以支持反向模式自动微分
"""

import logging
from typing import Any, Optional, Sequence, Tuple, Union

import numpy as np

from tensor_autodiff.config import Config
from tensor_autodiff.errors import DegenerateVectorError, ShapeError
from tensor_autodiff.tape import BackwardFn, Tape, get_tape

logger = logging.getLogger(__name__)

Axis = Optional[Union[int, Tuple[int, ...]]]


class Tensor:
    """稠密张量"""

    def __init__(self, data: Any, requires_grad: bool = False, name: Optional[str] = None):
        array = np.array(data, dtype=Config.DTYPE)
        if any(extent <= 0 for extent in array.shape):
            raise ShapeError(f"张量各维长度必须为正，实际形状: {array.shape}")
        self.data: np.ndarray = array
        self.requires_grad = requires_grad
        self.name = name
        self.grad: Optional[np.ndarray] = None
        self.is_leaf = True
        self._tape: Optional[Tape] = None
        self._generation = -1
        self._node_id: Optional[int] = None

    @classmethod
    def _wrap(cls, array: np.ndarray) -> "Tensor":
        # 运算结果：不复制，只读
        tensor = cls.__new__(cls)
        array = np.asarray(array, dtype=Config.DTYPE)
        array.flags.writeable = False
        tensor.data = array
        tensor.requires_grad = False
        tensor.name = None
        tensor.grad = None
        tensor.is_leaf = False
        tensor._tape = None
        tensor._generation = -1
        tensor._node_id = None
        return tensor

    # ==================== 计算带挂接 ====================

    def node_id_on(self, tape: Tape) -> Optional[int]:
        if self._tape is tape and self._generation == tape.generation:
            return self._node_id
        return None

    def attach(self, tape: Tape, node_id: int) -> None:
        self._tape = tape
        self._generation = tape.generation
        self._node_id = node_id
        self.requires_grad = True

    def detach_from(self, tape: Tape) -> None:
        if self._tape is tape:
            self._tape = None
            self._node_id = None
            self._generation = -1

    @property
    def tape(self) -> Optional[Tape]:
        if self._tape is not None and self._generation == self._tape.generation:
            return self._tape
        return None

    @property
    def node_id(self) -> Optional[int]:
        tape = self.tape
        return self._node_id if tape is not None else None

    # ==================== 基本属性 ====================

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return int(self.data.size)

    def item(self) -> float:
        if self.size != 1:
            raise ShapeError(f"item() 只适用于单元素张量，实际形状: {self.shape}")
        return float(self.data.reshape(-1)[0])

    def numpy(self) -> np.ndarray:
        return np.array(self.data)

    def detach(self) -> "Tensor":
        return Tensor(self.data)

    def assign(self, values: Any) -> None:
        """替换叶子张量的数值（优化器更新、有限差分扰动）"""
        array = np.array(values, dtype=Config.DTYPE)
        if array.shape != self.shape:
            raise ShapeError(f"赋值形状不匹配: {array.shape} vs {self.shape}")
        self.data = array

    def __repr__(self) -> str:
        label = f" name={self.name}" if self.name else ""
        return f"<Tensor{label} shape={self.shape} requires_grad={self.requires_grad}>"

    # ==================== 运算符 ====================

    def __add__(self, other: Any) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Any) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Any) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Any) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Any) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Any) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Any) -> "Tensor":
        return div(self, other)

    def __rtruediv__(self, other: Any) -> "Tensor":
        return div(other, self)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __matmul__(self, other: Any) -> "Tensor":
        return matmul(self, other)

    def exp(self) -> "Tensor":
        return exp(self)

    def log(self) -> "Tensor":
        return log(self)

    def abs(self) -> "Tensor":
        return absolute(self)

    def sqrt(self) -> "Tensor":
        return sqrt(self)

    def tanh(self) -> "Tensor":
        return tanh(self)

    def sum(self, axis: Axis = None, keepdims: bool = False) -> "Tensor":
        return reduce_sum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis: Axis = None, keepdims: bool = False) -> "Tensor":
        return reduce_mean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape: Any) -> "Tensor":
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes: int) -> "Tensor":
        return transpose(self, axes if axes else None)

    @property
    def T(self) -> "Tensor":
        return transpose(self, None)


def as_tensor(value: Any) -> Tensor:
    """非张量输入包装为常量张量"""
    if isinstance(value, Tensor):
        return value
    return Tensor._wrap(np.array(value, dtype=Config.DTYPE))


def _apply(op: str, inputs: Sequence[Tensor], out: np.ndarray, backward_fn: BackwardFn) -> Tensor:
    result = Tensor._wrap(out)
    tape = get_tape()
    node_id = tape.record(op, inputs, backward_fn)
    if node_id is not None:
        result.attach(tape, node_id)
    return result


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    """把广播后的梯度按原形状求和还原"""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, extent in enumerate(shape) if extent == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: 形状无法广播 {a.shape} 与 {b.shape}") from None


# ==================== 逐元素二元运算 ====================

def add(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")
    sa, sb = a.shape, b.shape
    return _apply("add", (a, b), a.data + b.data,
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")
    sa, sb = a.shape, b.shape
    return _apply("sub", (a, b), a.data - b.data,
                  lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")
    x, y = a.data, b.data
    return _apply("mul", (a, b), x * y,
                  lambda g: (_unbroadcast(g * y, x.shape), _unbroadcast(g * x, y.shape)))


def div(a: Any, b: Any) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    x, y = a.data, b.data
    return _apply("div", (a, b), x / y,
                  lambda g: (_unbroadcast(g / y, x.shape), _unbroadcast(-g * x / (y * y), y.shape)))


def matmul(a: Any, b: Any) -> Tensor:
    """
    矩阵乘法 a[..., m, k] @ b[..., k, n]

    前导批维按 numpy.matmul 规则广播；两侧都需要梯度
    """
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ShapeError(f"matmul 需要至少二维的操作数: {a.shape} @ {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul 内维不匹配: {a.shape} @ {b.shape} (内维 {a.shape[-1]} != {b.shape[-2]})")
    try:
        out = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul 批维无法广播: {a.shape} @ {b.shape}") from None
    x, y = a.data, b.data

    def backward_fn(g: np.ndarray):
        grad_a = np.matmul(g, np.swapaxes(y, -1, -2))
        grad_b = np.matmul(np.swapaxes(x, -1, -2), g)
        return _unbroadcast(grad_a, x.shape), _unbroadcast(grad_b, y.shape)

    return _apply("matmul", (a, b), out, backward_fn)


# ==================== 逐元素一元运算 ====================

def neg(a: Any) -> Tensor:
    a = as_tensor(a)
    return _apply("neg", (a,), -a.data, lambda g: (-g,))


def exp(a: Any) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _apply("exp", (a,), out, lambda g: (g * out,))


def log(a: Any) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _apply("log", (a,), np.log(x), lambda g: (g / x,))


def absolute(a: Any) -> Tensor:
    a = as_tensor(a)
    x = a.data
    return _apply("abs", (a,), np.abs(x), lambda g: (g * np.sign(x),))


def sqrt(a: Any) -> Tensor:
    a = as_tensor(a)
    out = np.sqrt(a.data)
    return _apply("sqrt", (a,), out, lambda g: (g * 0.5 / out,))


def tanh(a: Any) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _apply("tanh", (a,), out, lambda g: (g * (1.0 - out * out),))


def sigmoid_values(x: np.ndarray) -> np.ndarray:
    """数值稳定的 logistic 函数（仅数值，不入计算带）"""
    x = np.asarray(x, dtype=Config.DTYPE)
    out = np.empty_like(x)
    positive = x >= 0
    out[positive] = 1.0 / (1.0 + np.exp(-x[positive]))
    e = np.exp(x[~positive])
    out[~positive] = e / (1.0 + e)
    return out


def softplus(a: Any) -> Tensor:
    """
    log(1 + exp(x))，逐元素

    x 大于阈值时走 x + log1p(exp(-x)) 分支避免溢出；导数为 logistic 函数
    """
    a = as_tensor(a)
    x = a.data
    out = np.empty_like(x)
    large = x > Config.SOFTPLUS_THRESHOLD
    out[large] = x[large] + np.log1p(np.exp(-x[large]))
    out[~large] = np.log1p(np.exp(x[~large]))
    return _apply("softplus", (a,), out, lambda g: (g * sigmoid_values(x),))


def gelu(a: Any) -> Tensor:
    """GELU（tanh 近似）: 0.5x(1+tanh(√(2/π)(x+0.044715x³)))"""
    a = as_tensor(a)
    x = a.data
    inner = Config.GELU_SCALE * (x + Config.GELU_COEF * x ** 3)
    t = np.tanh(inner)
    out = 0.5 * x * (1.0 + t)

    def backward_fn(g: np.ndarray):
        d_inner = Config.GELU_SCALE * (1.0 + 3.0 * Config.GELU_COEF * x * x)
        return (g * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * d_inner),)

    return _apply("gelu", (a,), out, backward_fn)


# ==================== 归约与变形 ====================

def _normalize_axes(axis: Axis, ndim: int) -> Tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    axes = (axis,) if isinstance(axis, int) else tuple(axis)
    return tuple(sorted(ax % ndim for ax in axes))


def reduce_sum(a: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    shape = a.shape
    axes = _normalize_axes(axis, a.ndim)
    out = a.data.sum(axis=axes, keepdims=keepdims)

    def backward_fn(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape),)

    return _apply("sum", (a,), out, backward_fn)


def reduce_mean(a: Any, axis: Axis = None, keepdims: bool = False) -> Tensor:
    a = as_tensor(a)
    axes = _normalize_axes(axis, a.ndim)
    count = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    return reduce_sum(a, axis=axes, keepdims=keepdims) / float(count)


def reshape(a: Any, shape: Sequence[int]) -> Tensor:
    a = as_tensor(a)
    original = a.shape
    try:
        out = a.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"reshape 失败: {original} -> {tuple(shape)}") from None
    return _apply("reshape", (a,), out, lambda g: (g.reshape(original),))


def transpose(a: Any, axes: Optional[Sequence[int]] = None) -> Tensor:
    a = as_tensor(a)
    perm = tuple(reversed(range(a.ndim))) if axes is None else tuple(axes)
    inverse = tuple(np.argsort(perm))
    return _apply("transpose", (a,), a.data.transpose(perm), lambda g: (g.transpose(inverse),))


def stack(tensors: Sequence[Any], axis: int = 0) -> Tensor:
    """沿新轴堆叠，反向时按位置拆分梯度"""
    items = [as_tensor(t) for t in tensors]
    if not items:
        raise ShapeError("stack 需要至少一个张量")
    shapes = {t.shape for t in items}
    if len(shapes) != 1:
        raise ShapeError(f"stack 形状不一致: {sorted(shapes)}")
    out = np.stack([t.data for t in items], axis=axis)
    count = len(items)
    return _apply("stack", items, out,
                  lambda g: tuple(np.take(g, i, axis=axis) for i in range(count)))


def l2_normalize(v: Any, axis: int = -1) -> Tensor:
    """
    沿 axis 做 L2 归一化 v / ‖v‖₂

    Raises:
        DegenerateVectorError: 任一向量范数不超过 NORM_EPS
    """
    v = as_tensor(v)
    norms = np.sqrt((v.data * v.data).sum(axis=axis))
    if np.any(norms <= Config.NORM_EPS):
        raise DegenerateVectorError(f"向量范数过小（<= {Config.NORM_EPS}），无法归一化")
    return v / (v * v).sum(axis=axis, keepdims=True).sqrt()

