"""
合成数据异常
"""

from tensor_autodiff.errors import CrtError


class DatasetError(CrtError, ValueError):
    """数据规格、类别划分、批采样请求无效，或数据集文件损坏"""
