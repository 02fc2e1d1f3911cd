"""
数据集文件读写
格式（小端）：magic "CRTDSET\\0" | u32 版本 | u32 H, W, L, 样本数, 类别数, 每样本部件数, 规格 JSON 字节数 |
float64 特征（行优先）| int64 标签 | int64 部件单元（样本数 × 部件数）| 规格 JSON（UTF-8，可为空）|
8 字节 xxh64 校验
"""

import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np
import xxhash
from pydantic import ValidationError

from crt_encoder import FeatureMap
from synthetic_data.config import Config
from synthetic_data.errors import DatasetError
from synthetic_data.models import Dataset, Sample, SyntheticSpec

logger = logging.getLogger(__name__)

_HEADER = struct.Struct("<8sIIIIIIII")
_DIGEST = struct.Struct("<Q")


def save_dataset(path: Union[str, Path], dataset: Dataset) -> Path:
    """
    写入数据集文件，返回路径

    Raises:
        DatasetError: 样本的部件单元数不一致，或写入失败
    """
    path = Path(path)
    part_count = len(dataset.samples[0].part_cells)
    if any(len(s.part_cells) != part_count for s in dataset.samples):
        raise DatasetError("数据集中各样本的部件单元数不一致，无法保存")

    features = dataset.features_array().astype("<f8")
    labels = dataset.labels_array().astype("<i8")
    cells = np.array([s.part_cells for s in dataset.samples], dtype="<i8").reshape(len(dataset), part_count)
    spec_json = dataset.spec.model_dump_json().encode("utf-8") if dataset.spec is not None else b""
    header = _HEADER.pack(
        Config.DATASET_MAGIC, Config.DATASET_VERSION,
        dataset.height, dataset.width, dataset.feature_dim,
        len(dataset), dataset.n_classes, part_count, len(spec_json),
    )
    body = header + features.tobytes(order="C") + labels.tobytes() + cells.tobytes(order="C") + spec_json
    digest = _DIGEST.pack(xxhash.xxh64(body).intdigest())

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(body + digest)
    except OSError as e:
        logger.error(f"❌ 写入数据集失败 {path}: {e}")
        raise DatasetError(f"无法写入数据集文件 {path}: {e}") from e

    logger.info(f"💾 数据集已保存: {path} ({len(dataset)} 个样本)")
    return path


def load_dataset(path: Union[str, Path]) -> Dataset:
    """
    读取数据集文件，部件单元与生成规格一并恢复

    Raises:
        FileNotFoundError: 文件不存在
        DatasetError: magic、版本、长度、校验和、部件单元或规格不符
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"数据集文件不存在: {path}")
    raw = path.read_bytes()

    if len(raw) < _HEADER.size + _DIGEST.size:
        raise DatasetError(f"数据集文件过短: {path}")
    body, stored = raw[: -_DIGEST.size], raw[-_DIGEST.size:]
    if xxhash.xxh64(body).intdigest() != _DIGEST.unpack(stored)[0]:
        logger.error(f"❌ 数据集校验和不符: {path}")
        raise DatasetError(f"数据集文件校验和不符: {path}")

    magic, version, height, width, dim, n_samples, n_classes, part_count, spec_len = _HEADER.unpack_from(body)
    if magic != Config.DATASET_MAGIC:
        raise DatasetError(f"不是数据集文件（magic={magic!r}）: {path}")
    if version != Config.DATASET_VERSION:
        raise DatasetError(f"不支持的数据集版本 {version}: {path}")

    positions = height * width
    feature_bytes = n_samples * positions * dim * 8
    label_offset = _HEADER.size + feature_bytes
    cell_offset = label_offset + n_samples * 8
    spec_offset = cell_offset + n_samples * part_count * 8
    expected = spec_offset + spec_len
    if len(body) != expected:
        raise DatasetError(f"数据集文件长度 {len(body)} 与头部声明 {expected} 不符: {path}")

    features = np.frombuffer(body, dtype="<f8", count=n_samples * positions * dim, offset=_HEADER.size)
    features = features.reshape(n_samples, positions, dim).astype(np.float64)
    labels = np.frombuffer(body, dtype="<i8", count=n_samples, offset=label_offset)
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise DatasetError(f"数据集标签超出 [0, {n_classes}): {path}")
    cells = np.frombuffer(body, dtype="<i8", count=n_samples * part_count, offset=cell_offset)
    cells = cells.reshape(n_samples, part_count)
    if np.any(cells < 0) or np.any(cells >= positions):
        raise DatasetError(f"部件单元超出 [0, {positions}): {path}")

    spec = None
    if spec_len:
        try:
            spec = SyntheticSpec.model_validate_json(body[spec_offset:])
        except ValidationError as e:
            raise DatasetError(f"数据集规格无法解析: {path}: {e}") from e
        if spec.n_classes != n_classes:
            raise DatasetError(f"规格类别数 {spec.n_classes} 与头部 {n_classes} 不符: {path}")

    samples = [
        Sample(FeatureMap(height, width, features[i]), int(labels[i]),
               part_cells=tuple(int(c) for c in cells[i]))
        for i in range(n_samples)
    ]
    logger.info(f"✅ 数据集已加载: {path} ({n_samples} 个样本, {n_classes} 类)")
    return Dataset(samples=samples, spec=spec)
