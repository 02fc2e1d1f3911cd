"""
合成数据模型
数据规格、样本、批次、数据集与类别不相交的划分
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from crt_encoder import FeatureMap
from synthetic_data.config import Config
from synthetic_data.errors import DatasetError
from tensor_autodiff import Tensor


class SyntheticSpec(BaseModel):
    """合成数据集规格"""
    model_config = ConfigDict(extra="forbid")

    n_classes: int = Field(Config.N_CLASSES, ge=1)
    samples_per_class: int = Field(Config.SAMPLES_PER_CLASS, ge=1)
    height: int = Field(Config.HEIGHT, ge=1)
    width: int = Field(Config.WIDTH, ge=1)
    feature_dim: int = Field(Config.FEATURE_DIM, ge=1)
    class_sep: float = Field(Config.CLASS_SEP, gt=0.0)
    noise_sigma: float = Field(Config.NOISE_SIGMA, ge=0.0)
    part_count: int = Field(Config.PART_COUNT, ge=1)
    train_fraction: float = Field(Config.TRAIN_FRACTION, gt=0.0, lt=1.0)
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check_parts(self) -> "SyntheticSpec":
        if self.part_count > self.height * self.width:
            raise ValueError(f"part_count={self.part_count} 超过网格单元数 {self.height * self.width}")
        return self

    @property
    def positions(self) -> int:
        return self.height * self.width


@dataclass
class Sample:
    """一个样本：特征图 + 类别"""
    feature_map: FeatureMap
    label: int
    part_cells: Tuple[int, ...] = ()  # 生成器放置部件的单元（行优先下标）

    def to_dict(self) -> Dict[str, Any]:
        return {"feature_map": self.feature_map.to_dict(), "label": self.label,
                "part_cells": list(self.part_cells)}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "Sample":
        return cls(feature_map=FeatureMap.from_dict(data["feature_map"]), label=int(data["label"]),
                   part_cells=tuple(int(c) for c in data.get("part_cells", ())))


@dataclass
class Batch:
    """P 个类别 × 每类 Q 个样本的批次"""
    samples: List[Sample]
    indices: List[int] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.samples)

    @property
    def labels(self) -> List[int]:
        return [s.label for s in self.samples]

    def features_array(self) -> np.ndarray:
        return np.stack([s.feature_map.features for s in self.samples])

    def features_tensor(self) -> Tensor:
        """常量张量 (N, H·W, L)"""
        return Tensor(self.features_array())


@dataclass
class Dataset:
    """不可变的样本集合"""
    samples: List[Sample]
    spec: Optional[SyntheticSpec] = None

    def __post_init__(self):
        if not self.samples:
            raise DatasetError("数据集为空")
        first = self.samples[0].feature_map
        for sample in self.samples:
            fm = sample.feature_map
            if (fm.height, fm.width, fm.dim) != (first.height, first.width, first.dim):
                raise DatasetError("数据集中特征图尺寸不一致")
            if sample.label < 0 or (self.spec is not None and sample.label >= self.spec.n_classes):
                raise DatasetError(f"类别超出范围: {sample.label}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def height(self) -> int:
        return self.samples[0].feature_map.height

    @property
    def width(self) -> int:
        return self.samples[0].feature_map.width

    @property
    def feature_dim(self) -> int:
        return self.samples[0].feature_map.dim

    @property
    def n_classes(self) -> int:
        if self.spec is not None:
            return self.spec.n_classes
        return int(max(s.label for s in self.samples)) + 1

    @property
    def class_ids(self) -> List[int]:
        return sorted({s.label for s in self.samples})

    def features_array(self) -> np.ndarray:
        """(N, H·W, L)"""
        return np.stack([s.feature_map.features for s in self.samples])

    def labels_array(self) -> np.ndarray:
        return np.array([s.label for s in self.samples], dtype=np.int64)

    def by_class(self) -> Dict[int, List[int]]:
        """类别 -> 样本下标列表"""
        groups: Dict[int, List[int]] = {}
        for i, sample in enumerate(self.samples):
            groups.setdefault(sample.label, []).append(i)
        return groups

    def subset(self, class_ids: List[int]) -> "Dataset":
        keep = set(class_ids)
        return Dataset(samples=[s for s in self.samples if s.label in keep], spec=self.spec)


@dataclass
class DatasetSplit:
    """训练/测试划分，两侧类别严格不相交"""
    train: Dataset
    test: Dataset

    def __post_init__(self):
        overlap = set(self.train.class_ids) & set(self.test.class_ids)
        if overlap:
            raise DatasetError(f"训练集与测试集类别重叠: {sorted(overlap)}")

    @property
    def train_classes(self) -> List[int]:
        return self.train.class_ids

    @property
    def test_classes(self) -> List[int]:
        return self.test.class_ids
