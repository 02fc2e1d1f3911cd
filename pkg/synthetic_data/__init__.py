"""
合成数据模块

带类别结构的确定性合成特征图数据集，代替真实图像经骨干网络提取的特征；
支持类别不相交的训练/测试划分和 P×Q 批采样。

使用示例：
    from synthetic_data import SyntheticSpec, generate_dataset, split_classes, sample_batch, rng_stream, Stream

    spec = SyntheticSpec(seed=7)
    split = split_classes(generate_dataset(spec), spec.train_fraction)
    batch = sample_batch(split.train, 4, 5, rng_stream(7, Stream.BATCH))
"""

from synthetic_data.config import Config
from synthetic_data.errors import DatasetError
from synthetic_data.generator import (
    Stream,
    generate_dataset,
    nearest_centroid_accuracy,
    rng_stream,
    sample_batch,
    split_classes,
)
from synthetic_data.models import Batch, Dataset, DatasetSplit, Sample, SyntheticSpec
from synthetic_data.storage import load_dataset, save_dataset

__version__ = "1.0.0"

__all__ = [
    "Config",
    "DatasetError",
    "SyntheticSpec",
    "Sample",
    "Batch",
    "Dataset",
    "DatasetSplit",
    "Stream",
    "rng_stream",
    "generate_dataset",
    "split_classes",
    "sample_batch",
    "nearest_centroid_accuracy",
    "save_dataset",
    "load_dataset",
]
