"""
有限差分工具
中心差分与相对误差，用于校验自动微分梯度
"""

from typing import Callable, Iterable, Optional, Tuple

import numpy as np

from tensor_autodiff.config import Config


def central_difference(func: Callable[[np.ndarray], float],
                       x: np.ndarray,
                       step: float = Config.FD_STEP,
                       indices: Optional[Iterable[Tuple[int, ...]]] = None) -> np.ndarray:
    """
    对标量函数 func 在 x 处做中心差分 (f(x+h) - f(x-h)) / 2h

    Args:
        func: 输入数组、返回标量的函数
        x: 求值点（不会被修改）
        step: 差分步长
        indices: 只对这些下标求差分，其余位置为 0；默认全部

    Returns:
        与 x 同形状的数值梯度
    """
    point = np.array(x, dtype=Config.DTYPE)
    grad = np.zeros_like(point)
    for idx in (indices if indices is not None else np.ndindex(point.shape)):
        original = point[idx]
        point[idx] = original + step
        f_plus = float(func(point))
        point[idx] = original - step
        f_minus = float(func(point))
        point[idx] = original
        grad[idx] = (f_plus - f_minus) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor)；floor > 0 时极小梯度按绝对误差评判"""
    analytic = np.asarray(analytic, dtype=Config.DTYPE)
    numeric = np.asarray(numeric, dtype=Config.DTYPE)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    diff = np.abs(analytic - numeric)
    return np.divide(diff, scale, out=np.zeros_like(diff), where=scale > 0)
