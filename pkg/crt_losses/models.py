"""
损失模块数据模型
"""

from dataclasses import dataclass
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from crt_losses.config import Config
from tensor_autodiff import ShapeError, Tensor


@dataclass
class SimilarityMatrix:
    """批内两两余弦相似度 (n, n)"""
    values: Tensor

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[0] != self.values.shape[1]:
            raise ShapeError(f"相似度矩阵必须是方阵，实际形状: {self.values.shape}")

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    def numpy(self) -> np.ndarray:
        return self.values.numpy()

    def is_valid(self, tol: float = Config.SIMILARITY_TOL) -> bool:
        """对称、对角为 1、取值在 [-1, 1] 内"""
        s = self.values.data
        return bool(
            np.allclose(s, s.T, atol=tol, rtol=0.0)
            and np.allclose(np.diag(s), 1.0, atol=tol, rtol=0.0)
            and np.all(np.abs(s) <= 1.0 + tol)
        )


class LossWeights(BaseModel):
    """总损失的权重与 MS 损失超参数"""
    model_config = ConfigDict(extra="forbid")

    branch_ms_weights: List[float] = Field(default_factory=lambda: list(Config.BRANCH_MS_WEIGHTS))
    consistency_weight: float = Field(Config.CONSISTENCY_WEIGHT, ge=0.0)
    div_weight: float = Field(Config.DIV_WEIGHT, ge=0.0)
    alpha: float = Field(Config.MS_ALPHA, gt=0.0)
    beta: float = Field(Config.MS_BETA, gt=0.0)
    margin: float = Field(Config.MS_MARGIN, gt=0.0)
    epsilon: float = Field(Config.MS_EPSILON, gt=0.0)

    @field_validator("branch_ms_weights")
    @classmethod
    def _check_ms_weights(cls, value: List[float]) -> List[float]:
        if any(v < 0 for v in value):
            raise ValueError(f"λ₁ 必须非负: {value}")
        return value
