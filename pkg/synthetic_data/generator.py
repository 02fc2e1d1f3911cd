"""
合成数据生成器
按类别生成"部件"向量，每个样本把部件放到随机网格单元上，其余单元为背景噪声
"""

import logging
import math
from enum import IntEnum
from typing import Optional

import numpy as np

from crt_encoder import FeatureMap
from synthetic_data.errors import DatasetError
from synthetic_data.models import Batch, Dataset, DatasetSplit, Sample, SyntheticSpec

logger = logging.getLogger(__name__)


class Stream(IntEnum):
    """由单个运行种子派生的随机数子流"""
    DATA = 0
    SPLIT = 1
    INIT = 2
    BATCH = 3


def rng_stream(seed: int, stream: Stream, *extra: int) -> np.random.Generator:
    """
    派生独立随机数子流

    Args:
        seed: 运行种子
        stream: 子流类别
        extra: 附加键（例如分支序号）
    """
    return np.random.default_rng([int(seed), int(stream), *[int(e) for e in extra]])


def generate_dataset(spec: SyntheticSpec) -> Dataset:
    """
    按规格生成数据集，结果只取决于 spec

    每个类别抽取 part_count 个部件向量（范数约为 class_sep）；
    每个样本随机选取 part_count 个互不相同的网格单元，按单元顺序放置部件（部件单元不含噪声），
    其余单元填充 σ = noise_sigma 的高斯背景噪声
    """
    rng = rng_stream(spec.seed, Stream.DATA)
    positions = spec.positions
    scale = spec.class_sep / math.sqrt(spec.feature_dim)
    parts = rng.normal(0.0, scale, size=(spec.n_classes, spec.part_count, spec.feature_dim))

    samples = []
    for label in range(spec.n_classes):
        for _ in range(spec.samples_per_class):
            features = rng.normal(0.0, spec.noise_sigma, size=(positions, spec.feature_dim))
            cells = np.sort(rng.choice(positions, size=spec.part_count, replace=False))
            features[cells] = parts[label]
            samples.append(Sample(FeatureMap(spec.height, spec.width, features), label,
                                  part_cells=tuple(int(c) for c in cells)))

    logger.info(
        f"✅ 生成合成数据集: {spec.n_classes} 类 × {spec.samples_per_class} 样本, "
        f"网格 {spec.height}x{spec.width}, L={spec.feature_dim}, 部件 {spec.part_count}")
    return Dataset(samples=samples, spec=spec)


def split_classes(dataset: Dataset, train_fraction: float, seed: Optional[int] = None) -> DatasetSplit:
    """
    按类别划分训练/测试集，两侧类别不相交

    Args:
        dataset: 数据集
        train_fraction: 训练类别占比
        seed: 给定时随机分配类别，否则编号小的类别进入训练集
    """
    classes = dataset.class_ids
    if len(classes) < 2:
        raise DatasetError(f"划分至少需要 2 个类别，实际 {len(classes)}")
    if not 0.0 < train_fraction < 1.0:
        raise DatasetError(f"train_fraction 必须在 (0, 1) 内: {train_fraction}")

    n_train = int(math.floor(train_fraction * len(classes) + 0.5))
    if n_train < 1 or n_train >= len(classes):
        raise DatasetError(
            f"train_fraction={train_fraction} 对 {len(classes)} 个类别会产生空的一侧")

    if seed is None:
        order = list(classes)
    else:
        order = [int(c) for c in rng_stream(seed, Stream.SPLIT).permutation(classes)]
    train_ids = sorted(order[:n_train])
    test_ids = sorted(order[n_train:])

    split = DatasetSplit(train=dataset.subset(train_ids), test=dataset.subset(test_ids))
    logger.info(f"📊 类别划分: 训练 {train_ids}, 测试 {test_ids}")
    return split


def sample_batch(train: Dataset, classes_per_batch: int, samples_per_class: int,
                 rng: np.random.Generator) -> Batch:
    """
    P×Q 批采样：均匀选取 P 个不同类别，每类无放回选取 Q 个样本
    """
    if classes_per_batch < 1 or samples_per_class < 1:
        raise DatasetError(f"P、Q 必须为正: P={classes_per_batch}, Q={samples_per_class}")
    groups = train.by_class()
    eligible = sorted(c for c, idx in groups.items() if len(idx) >= samples_per_class)
    if len(eligible) < classes_per_batch:
        raise DatasetError(
            f"只有 {len(eligible)} 个类别拥有至少 {samples_per_class} 个样本，无法采样 {classes_per_batch} 个类别")

    chosen = rng.choice(eligible, size=classes_per_batch, replace=False)
    indices = []
    for label in chosen:
        picked = rng.choice(groups[int(label)], size=samples_per_class, replace=False)
        indices.extend(int(i) for i in picked)
    return Batch(samples=[train.samples[i] for i in indices], indices=indices)


def nearest_centroid_accuracy(dataset: Dataset) -> float:
    """对平均池化后的特征图做最近类中心分类，返回准确率（生成器的健全性下限）"""
    pooled = dataset.features_array().mean(axis=1)
    labels = dataset.labels_array()
    classes = np.array(dataset.class_ids)
    centroids = np.stack([pooled[labels == c].mean(axis=0) for c in classes])
    dists = ((pooled[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=-1)
    predicted = classes[np.argmin(dists, axis=1)]
    return float(np.mean(predicted == labels))
