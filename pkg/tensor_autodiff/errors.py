"""
异常定义
整个 CRT 引擎的异常都派生自 CrtError，CLI 据此映射退出码
"""

from typing import Optional


class CrtError(Exception):
    """CRT 引擎异常基类"""


class ShapeError(CrtError, ValueError):
    """张量尺寸不匹配"""


class DegenerateVectorError(CrtError, ValueError):
    """向量范数过小，无法归一化"""


class AutodiffError(CrtError, RuntimeError):
    """计算图 / 反向传播使用错误"""


class NumericalError(CrtError, RuntimeError):
    """数值异常（NaN / Inf），可携带出错的训练步"""

    def __init__(self, message: str, step: Optional[int] = None):
        super().__init__(message)
        self.step = step
