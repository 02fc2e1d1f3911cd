# 配置文件
import numpy as np


class Config:
    """自动微分引擎配置类"""

    # 全程双精度：单精度下无法做到 1e-4 的梯度校验
    DTYPE = np.float64

    # l2_normalize 的退化阈值
    NORM_EPS = 1e-12

    # softplus 大输入分支阈值
    SOFTPLUS_THRESHOLD = 30.0

    # GELU tanh 近似
    GELU_COEF = 0.044715
    GELU_SCALE = float(np.sqrt(2.0 / np.pi))

    # 单边 Jacobi 奇异值
    JACOBI_TOL = 1e-13
    JACOBI_MAX_SWEEPS = 60

    # 中心差分默认步长
    FD_STEP = 1e-5
