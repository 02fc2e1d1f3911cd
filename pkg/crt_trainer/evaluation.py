"""
评估
冻结模型对测试类别做单次前向推理，计算检索与泛化指标
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from crt_trainer.config import Config
from crt_trainer.models import ModelState
from gen_metrics import (
    DensityReport,
    RetrievalReport,
    SpectralReport,
    embedding_space_density,
    recall_at_k,
    spectral_decay,
)
from synthetic_data import Dataset, DatasetError
from tensor_autodiff import Tensor, no_grad

logger = logging.getLogger(__name__)


@dataclass
class BranchEvaluation:
    """单个分支的评估报告"""
    branch: str
    retrieval: RetrievalReport
    density: DensityReport
    spectral: SpectralReport

    def to_dict(self) -> Dict[str, Any]:
        return {
            "branch": self.branch,
            "retrieval": self.retrieval.to_dict(),
            "density": self.density.to_dict(),
            "spectral": self.spectral.to_dict(),
        }

    def to_text(self) -> str:
        prefix = f"{self.branch}."
        return "\n".join([
            self.retrieval.to_text(prefix),
            self.density.to_text(prefix),
            self.spectral.to_text(prefix),
        ])


@dataclass
class EvaluationResult:
    """全部分支的评估结果；第一个分支为主输出"""
    branches: List[BranchEvaluation]
    n_samples: int

    @property
    def primary(self) -> BranchEvaluation:
        return self.branches[0]

    def to_text(self) -> str:
        lines = [f"n_samples={self.n_samples!r}", f"primary={self.primary.branch}"]
        lines.extend(b.to_text() for b in self.branches)
        return "\n".join(lines) + "\n"


def embed_dataset(model: ModelState, dataset: Dataset, branch: Any = 0,
                  chunk: int = Config.EMBED_CHUNK) -> np.ndarray:
    """冻结推理：返回 (N, D_out) 原始嵌入，不记录计算带"""
    target = model.branch(branch)
    features = dataset.features_array()
    outputs = []
    with no_grad():
        for start in range(0, len(features), chunk):
            outputs.append(target.forward(Tensor(features[start:start + chunk])).numpy())
    return np.concatenate(outputs, axis=0)


def normalize_rows(embeddings: np.ndarray) -> np.ndarray:
    """L2 归一化；零向量保持不变"""
    norms = np.linalg.norm(embeddings, axis=1, keepdims=True)
    safe = np.where(norms > 0.0, norms, 1.0)
    return embeddings / safe


def evaluate(model: ModelState, test_set: Dataset, ks: Sequence[int] = Config.DEFAULT_KS,
             train_classes: Optional[Sequence[int]] = None) -> EvaluationResult:
    """
    在测试类别上评估所有分支

    Args:
        model: 冻结的模型
        test_set: 测试集
        ks: Recall@K 的截断
        train_classes: 训练类别；给定时检查与测试类别不相交
    """
    if train_classes is not None:
        overlap = set(int(c) for c in train_classes) & set(test_set.class_ids)
        if overlap:
            raise DatasetError(f"测试类别与训练类别重叠: {sorted(overlap)}")

    labels = test_set.labels_array()
    results = []
    for branch in model.branches:
        embeddings = normalize_rows(embed_dataset(model, test_set, branch.name))
        result = BranchEvaluation(
            branch=branch.name,
            retrieval=recall_at_k(embeddings, labels, ks),
            density=embedding_space_density(embeddings, labels),
            spectral=spectral_decay(embeddings),
        )
        logger.info(
            f"📊 {branch.name}: Recall@{result.retrieval.ks[0]}={result.retrieval.recalls[0]:.4f}, "
            f"密度={result.density.density:.4f}, 谱衰减={result.spectral.rho:.4f}")
        results.append(result)
    return EvaluationResult(branches=results, n_samples=len(test_set))
