"""
训练器异常
"""

from tensor_autodiff.errors import CrtError


class CheckpointError(CrtError, ValueError):
    """检查点文件 magic、版本、长度或校验和不符"""
