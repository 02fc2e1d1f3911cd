"""
CRT 编码器数据模型
特征图、原型集合、残差编码、嵌入头以及分支配置
"""

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from crt_encoder.config import Config
from tensor_autodiff import DegenerateVectorError, ShapeError, Tensor, gelu, matmul


class BranchKind(str, Enum):
    """嵌入分支类型"""
    CRT = "crt"
    BASELINE = "baseline"  # 平均池化 + 线性层


class BranchConfig(BaseModel):
    """单个 CRT 嵌入分支的超参数"""
    model_config = ConfigDict(extra="forbid", use_enum_values=False)

    name: str = "branch1"
    kind: BranchKind = BranchKind.CRT
    num_prototypes: int = Field(Config.BRANCH1_PROTOTYPES, ge=1)
    hidden_dim: int = Field(Config.DEFAULT_HIDDEN_DIM, ge=1)
    embed_dim: int = Field(Config.BRANCH1_EMBED_DIM, ge=1)
    per_prototype_heads: bool = True
    ms_weight: float = Field(1.0, ge=0.0)

    @property
    def head_count(self) -> int:
        return self.num_prototypes if self.per_prototype_heads else 1


@dataclass
class FeatureMap:
    """H×W 网格上的 L 维特征向量，按行优先存为 (H·W, L)"""
    height: int
    width: int
    features: np.ndarray

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        if self.height <= 0 or self.width <= 0:
            raise ShapeError(f"特征图尺寸必须为正: {self.height}x{self.width}")
        if self.features.ndim != 2 or self.features.shape[0] != self.height * self.width:
            raise ShapeError(
                f"特征图需要 {self.height * self.width} 个特征向量，实际形状: {self.features.shape}")

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    @property
    def positions(self) -> int:
        return self.height * self.width

    @classmethod
    def from_grid(cls, grid: Any) -> "FeatureMap":
        """从 H×W×L 数组创建"""
        grid = np.asarray(grid, dtype=np.float64)
        if grid.ndim != 3:
            raise ShapeError(f"特征网格需要三维 (H, W, L)，实际形状: {grid.shape}")
        h, w, l = grid.shape
        return cls(height=h, width=w, features=grid.reshape(h * w, l))

    def grid(self) -> np.ndarray:
        return self.features.reshape(self.height, self.width, self.dim)

    def as_tensor(self) -> Tensor:
        """常量张量 (H·W, L)"""
        return Tensor(self.features)

    def to_dict(self) -> Dict[str, Any]:
        return {"height": self.height, "width": self.width, "features": self.features.tolist()}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "FeatureMap":
        return cls(height=data["height"], width=data["width"], features=np.array(data["features"]))


@dataclass
class PrototypeSet:
    """K 个可学习的 L 维原型，即原型网络的权重矩阵"""
    prototypes: Tensor

    def __post_init__(self):
        if self.prototypes.ndim != 2:
            raise ShapeError(f"原型集合需要 (K, L) 矩阵，实际形状: {self.prototypes.shape}")
        self.validate()

    @property
    def count(self) -> int:
        return int(self.prototypes.shape[0])

    @property
    def dim(self) -> int:
        return int(self.prototypes.shape[1])

    def validate(self) -> None:
        norms = np.linalg.norm(self.prototypes.data, axis=1)
        if np.any(norms <= Config.PROTOTYPE_MIN_NORM):
            zero_ids = [int(i) for i in np.flatnonzero(norms <= Config.PROTOTYPE_MIN_NORM)]
            raise DegenerateVectorError(f"原型向量范数过小: {zero_ids}")

    @classmethod
    def from_array(cls, values: Any, name: str = "prototypes") -> "PrototypeSet":
        return cls(Tensor(values, requires_grad=True, name=name))


@dataclass
class ResidualCode:
    """每个原型一个残差编码 r_k，形状 (K, L)"""
    codes: Tensor

    @property
    def count(self) -> int:
        return int(self.codes.shape[0])

    @property
    def dim(self) -> int:
        return int(self.codes.shape[1])


@dataclass
class EmbeddingHead:
    """非线性嵌入网络 Linear(L→D_h) → GELU → Linear(D_h→D_out)"""
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor

    def __post_init__(self):
        if self.w1.ndim != 2 or self.w2.ndim != 2:
            raise ShapeError("嵌入头权重必须是矩阵")
        if self.b1.shape != (self.w1.shape[1],):
            raise ShapeError(f"b1 形状 {self.b1.shape} 与 w1 {self.w1.shape} 不匹配")
        if self.w2.shape[0] != self.w1.shape[1]:
            raise ShapeError(f"w2 输入维 {self.w2.shape[0]} 与隐藏维 {self.w1.shape[1]} 不匹配")
        if self.b2.shape != (self.w2.shape[1],):
            raise ShapeError(f"b2 形状 {self.b2.shape} 与 w2 {self.w2.shape} 不匹配")

    @property
    def in_dim(self) -> int:
        return int(self.w1.shape[0])

    @property
    def hidden_dim(self) -> int:
        return int(self.w1.shape[1])

    @property
    def out_dim(self) -> int:
        return int(self.w2.shape[1])

    def apply(self, r: Tensor) -> Tensor:
        """对最后一维为 L 的输入做嵌入"""
        if r.shape[-1] != self.in_dim:
            raise ShapeError(f"嵌入头输入维 {r.shape[-1]} != {self.in_dim}")
        squeeze = r.ndim == 1
        if squeeze:
            r = r.reshape(1, self.in_dim)
        out = matmul(gelu(matmul(r, self.w1) + self.b1), self.w2) + self.b2
        return out.reshape(self.out_dim) if squeeze else out

    def named_parameters(self, prefix: str) -> List[Tuple[str, Tensor]]:
        return [
            (f"{prefix}.w1", self.w1),
            (f"{prefix}.b1", self.b1),
            (f"{prefix}.w2", self.w2),
            (f"{prefix}.b2", self.b2),
        ]
