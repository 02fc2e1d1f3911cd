"""
训练目标
原型多样性损失、Multi-Similarity 损失、跨分支相似度矩阵一致性损失及其加权组合
"""

import logging
from typing import Any, Sequence, Tuple, Union

import numpy as np

from crt_encoder import PrototypeSet
from crt_losses.models import LossWeights, SimilarityMatrix
from tensor_autodiff import (
    ShapeError,
    Tensor,
    absolute,
    as_tensor,
    exp,
    l2_normalize,
    log,
    matmul,
    stack,
)

logger = logging.getLogger(__name__)


def _prototype_tensor(ps: Union[PrototypeSet, Tensor]) -> Tensor:
    return ps.prototypes if isinstance(ps, PrototypeSet) else ps


def diversity_loss(ps: Union[PrototypeSet, Tensor]) -> Tensor:
    """
    原型多样性损失：两两原型余弦相似度绝对值的均值

    K < 2 时定义为 0 并给出警告；零原型抛出 DegenerateVectorError
    """
    c = _prototype_tensor(ps)
    k = c.shape[0]
    if k < 2:
        logger.warning(f"⚠️ 原型数 K={k} < 2，多样性损失按 0 处理")
        return as_tensor(0.0)
    normed = l2_normalize(c, axis=-1)
    cos = matmul(normed, normed.T)
    off_diagonal = 1.0 - np.eye(k)
    return (absolute(cos) * off_diagonal).sum() / float(k * (k - 1))


def pairwise_abs_cosine(ps: Union[PrototypeSet, Tensor]) -> float:
    """两两原型 |cos| 的均值（诊断用，数值与 diversity_loss 一致）"""
    c = _prototype_tensor(ps).data
    k = c.shape[0]
    if k < 2:
        return 0.0
    normed = c / np.linalg.norm(c, axis=1, keepdims=True)
    cos = np.abs(normed @ normed.T)
    return float((cos.sum() - np.trace(cos)) / (k * (k - 1)))


def similarity_matrix(embeddings: Union[Tensor, Sequence[Tensor]]) -> SimilarityMatrix:
    """
    批内余弦相似度矩阵；嵌入先做 L2 归一化

    Args:
        embeddings: (n, D) 张量或 n 个 (D,) 张量
    """
    if isinstance(embeddings, Tensor):
        e = embeddings
    else:
        if len(embeddings) == 0:
            raise ShapeError("相似度矩阵需要至少一个嵌入")
        e = stack(list(embeddings))
    if e.ndim != 2:
        raise ShapeError(f"嵌入需要 (n, D)，实际形状: {e.shape}")
    normed = l2_normalize(e, axis=-1)
    return SimilarityMatrix(values=matmul(normed, normed.T))


def mine_pairs(sim_values: Any, labels: Sequence[int], w: LossWeights) -> Tuple[np.ndarray, np.ndarray]:
    """
    MS 困难样本对挖掘

    正样本对保留 s_ip < max_k s_ik + ε，负样本对保留 s_ik > min_p s_ip − ε；
    锚点没有负样本时保留全部正样本，反之亦然

    Returns:
        (正样本掩码, 负样本掩码)，均为 (n, n) 布尔数组
    """
    s = np.asarray(sim_values, dtype=np.float64)
    y = np.asarray(labels)
    n = len(y)
    if s.shape != (n, n):
        raise ShapeError(f"标签数 {n} 与相似度矩阵形状 {s.shape} 不匹配")

    same = y[:, None] == y[None, :]
    pos_all = same & ~np.eye(n, dtype=bool)
    neg_all = ~same
    has_pos = pos_all.any(axis=1)
    has_neg = neg_all.any(axis=1)

    hardest_neg = np.where(neg_all, s, -np.inf).max(axis=1)
    easiest_pos = np.where(pos_all, s, np.inf).min(axis=1)

    pos_mask = pos_all & (~has_neg[:, None] | (s < hardest_neg[:, None] + w.epsilon))
    neg_mask = neg_all & (~has_pos[:, None] | (s > easiest_pos[:, None] - w.epsilon))
    return pos_mask, neg_mask


def ms_loss(sim: SimilarityMatrix, labels: Sequence[int], w: LossWeights) -> Tensor:
    """
    Multi-Similarity 损失

    每个锚点: (1/α)·log(1 + Σ_P e^{−α(s−λ_m)}) + (1/β)·log(1 + Σ_N e^{β(s−λ_m)})，
    对锚点取平均；挖掘结果为空的项贡献 0
    """
    if len(labels) != sim.n:
        raise ShapeError(f"标签数 {len(labels)} 与批大小 {sim.n} 不一致")
    pos_mask, neg_mask = mine_pairs(sim.values.data, labels, w)
    shifted = sim.values - w.margin

    pos_sum = (exp(shifted * (-w.alpha)) * pos_mask.astype(np.float64)).sum(axis=1)
    neg_sum = (exp(shifted * w.beta) * neg_mask.astype(np.float64)).sum(axis=1)
    per_anchor = log(pos_sum + 1.0) / w.alpha + log(neg_sum + 1.0) / w.beta
    return per_anchor.mean()


def consistency_loss(s1: SimilarityMatrix, s2: SimilarityMatrix) -> Tensor:
    """两个分支相似度矩阵逐元素差绝对值的均值（含对角线）"""
    if s1.n != s2.n:
        raise ShapeError(f"相似度矩阵大小不一致: {s1.n} vs {s2.n}")
    return absolute(s1.values - s2.values).mean()


def total_loss(branch_ms: Sequence[Any], div: Sequence[Any], con: Any, w: LossWeights) -> Tensor:
    """
    总损失 L = div_weight·Σ L_DIV + Σ λ₁⁽ᵇ⁾·L_MS⁽ᵇ⁾ + λ₂·L_CON
    """
    if len(branch_ms) != len(div):
        raise ShapeError(f"MS 项 {len(branch_ms)} 个与多样性项 {len(div)} 个不一致")
    if len(branch_ms) != len(w.branch_ms_weights):
        raise ShapeError(f"MS 项 {len(branch_ms)} 个与 λ₁ 权重 {len(w.branch_ms_weights)} 个不一致")

    div_sum = as_tensor(0.0)
    for term in div:
        div_sum = div_sum + as_tensor(term)
    total = div_sum * w.div_weight
    for weight, term in zip(w.branch_ms_weights, branch_ms):
        total = total + as_tensor(term) * weight
    return total + as_tensor(con) * w.consistency_weight
