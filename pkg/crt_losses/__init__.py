"""
损失函数模块

多样性损失、Multi-Similarity 损失、一致性损失以及总损失组合，
全部基于 tensor_autodiff 构建，可直接反向传播。

使用示例：
    from crt_losses import LossWeights, similarity_matrix, ms_loss

    sim = similarity_matrix(embeddings)        # (n, D) 张量
    loss = ms_loss(sim, labels, LossWeights())
"""

from crt_losses.config import Config
from crt_losses.losses import (
    consistency_loss,
    diversity_loss,
    mine_pairs,
    ms_loss,
    pairwise_abs_cosine,
    similarity_matrix,
    total_loss,
)
from crt_losses.models import LossWeights, SimilarityMatrix

__version__ = "1.0.0"

__all__ = [
    "Config",
    "LossWeights",
    "SimilarityMatrix",
    "diversity_loss",
    "pairwise_abs_cosine",
    "similarity_matrix",
    "mine_pairs",
    "ms_loss",
    "consistency_loss",
    "total_loss",
]
