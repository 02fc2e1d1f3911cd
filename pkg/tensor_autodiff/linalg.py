"""
数值线性代数内核
单边 Jacobi 奇异值分解（只求奇异值，不求奇异向量）
"""

import logging
from typing import Any, List

import numpy as np

from tensor_autodiff.config import Config
from tensor_autodiff.errors import NumericalError, ShapeError
from tensor_autodiff.tensor import Tensor

logger = logging.getLogger(__name__)


def singular_values(m: Any) -> List[float]:
    """
    计算 n×d 矩阵的奇异值

    在较小的 Gram 一侧做单边 Jacobi：把列数较少的那一面作为列，
    反复旋转列对直到两两正交，奇异值即为各列范数。
    仅用于诊断，不参与求导。

    Args:
        m: Tensor 或二维数组

    Returns:
        降序排列的 min(n, d) 个非负奇异值
    """
    array = np.array(m.data if isinstance(m, Tensor) else m, dtype=Config.DTYPE)
    if array.ndim != 2:
        raise ShapeError(f"singular_values 需要二维矩阵，实际形状: {array.shape}")
    if not np.all(np.isfinite(array)):
        raise NumericalError("singular_values 输入包含 NaN 或 Inf")

    n, d = array.shape
    work = array.copy() if n >= d else array.T.copy()
    cols = work.shape[1]

    sweeps = 0
    for sweeps in range(1, Config.JACOBI_MAX_SWEEPS + 1):
        rotated = False
        for i in range(cols - 1):
            for j in range(i + 1, cols):
                col_i = work[:, i]
                col_j = work[:, j]
                alpha = float(col_i @ col_i)
                beta = float(col_j @ col_j)
                gamma = float(col_i @ col_j)
                if gamma == 0.0 or abs(gamma) <= Config.JACOBI_TOL * np.sqrt(alpha * beta):
                    continue
                rotated = True
                zeta = (beta - alpha) / (2.0 * gamma)
                t = (1.0 if zeta >= 0 else -1.0) / (abs(zeta) + np.sqrt(1.0 + zeta * zeta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = c * t
                new_i = c * col_i - s * col_j
                new_j = s * col_i + c * col_j
                work[:, i] = new_i
                work[:, j] = new_j
        if not rotated:
            break
    else:
        logger.warning(f"⚠️ Jacobi 迭代达到最大轮数 {Config.JACOBI_MAX_SWEEPS} 仍未完全收敛")

    logger.debug(f"Jacobi 收敛: {sweeps} 轮, 矩阵 {n}x{d}")
    values = np.sqrt((work * work).sum(axis=0))
    return sorted((float(v) for v in values), reverse=True)
