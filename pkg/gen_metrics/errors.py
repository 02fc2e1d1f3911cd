"""
泛化指标异常
"""

from tensor_autodiff.errors import CrtError


class MetricError(CrtError, ValueError):
    """指标输入无效（样本过少、缺少类内/类间样本对、零嵌入等）"""
