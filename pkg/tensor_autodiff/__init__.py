"""
张量与自动微分模块

基于 numpy 的最小稠密张量引擎：双精度、计算带式反向模式自动微分，
外加单边 Jacobi 奇异值内核。足以表达并求导 CRT 的全部运算与损失。

使用示例：
    from tensor_autodiff import Tensor, matmul, softplus, backward

    x = Tensor([[1.0, 2.0]], requires_grad=True)
    y = Tensor([[3.0], [4.0]], requires_grad=True)
    loss = softplus(matmul(x, y)).sum()
    grads = backward(loss)
    print(grads[x])
"""

from tensor_autodiff.config import Config
from tensor_autodiff.errors import (
    AutodiffError,
    CrtError,
    DegenerateVectorError,
    NumericalError,
    ShapeError,
)
from tensor_autodiff.linalg import singular_values
from tensor_autodiff.numeric import central_difference, relative_error
from tensor_autodiff.tape import Tape, TapeNode, backward, get_tape, no_grad
from tensor_autodiff.tensor import (
    Tensor,
    absolute,
    add,
    as_tensor,
    div,
    exp,
    gelu,
    l2_normalize,
    log,
    matmul,
    mul,
    neg,
    reduce_mean,
    reduce_sum,
    reshape,
    sigmoid_values,
    softplus,
    sqrt,
    stack,
    sub,
    tanh,
    transpose,
)

__version__ = "1.0.0"

__all__ = [
    "Config",
    # 异常
    "CrtError",
    "ShapeError",
    "DegenerateVectorError",
    "AutodiffError",
    "NumericalError",
    # 计算带
    "Tape",
    "TapeNode",
    "get_tape",
    "no_grad",
    "backward",
    # 张量与运算
    "Tensor",
    "as_tensor",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "exp",
    "log",
    "absolute",
    "sqrt",
    "tanh",
    "sigmoid_values",
    "softplus",
    "gelu",
    "matmul",
    "reduce_sum",
    "reduce_mean",
    "reshape",
    "transpose",
    "stack",
    "l2_normalize",
    # 线性代数与差分
    "singular_values",
    "central_difference",
    "relative_error",
]
