"""
泛化与检索指标
Recall@K、嵌入空间密度、谱衰减；纯函数，只读输入
"""

import logging
from typing import Any, List, Sequence

import numpy as np

from gen_metrics.config import Config
from gen_metrics.errors import MetricError
from gen_metrics.reports import DensityReport, RetrievalReport, SpectralReport
from tensor_autodiff import Tensor, singular_values

logger = logging.getLogger(__name__)


def _as_matrix(embeddings: Any) -> np.ndarray:
    if isinstance(embeddings, Tensor):
        matrix = embeddings.numpy()
    else:
        matrix = np.asarray(embeddings, dtype=np.float64)
    if matrix.ndim != 2:
        raise MetricError(f"嵌入需要 (n, D) 矩阵，实际形状: {matrix.shape}")
    if not np.all(np.isfinite(matrix)):
        raise MetricError("嵌入包含 NaN 或 Inf")
    return matrix


def _as_labels(labels: Sequence[int], n: int) -> np.ndarray:
    y = np.asarray(labels)
    if y.shape != (n,):
        raise MetricError(f"标签数 {y.shape} 与样本数 {n} 不一致")
    return y


def recall_at_k(embeddings: Any, labels: Sequence[int], ks: Sequence[int]) -> RetrievalReport:
    """
    Recall@K：按余弦相似度降序排列其它样本，前 K 个中含同类样本的查询比例

    相似度相同时按样本下标排序；K 超过 n−1 时按 n−1 计算
    """
    e = _as_matrix(embeddings)
    n = e.shape[0]
    if n < 2:
        raise MetricError(f"Recall@K 至少需要 2 个样本，实际 {n}")
    y = _as_labels(labels, n)
    cutoffs: List[int] = sorted({int(k) for k in ks})
    if not cutoffs or cutoffs[0] < 1:
        raise MetricError(f"K 必须为正整数: {list(ks)}")

    norms = np.linalg.norm(e, axis=1, keepdims=True)
    if np.any(norms <= Config.ZERO_NORM):
        raise MetricError("存在零嵌入，余弦相似度无定义")
    normed = e / norms
    sim = normed @ normed.T
    np.fill_diagonal(sim, -np.inf)

    index_grid = np.broadcast_to(np.arange(n), (n, n))
    order = np.lexsort((index_grid, -sim), axis=-1)[:, : n - 1]
    hits = y[order] == y[:, None]
    first_hit = np.where(hits.any(axis=1), hits.argmax(axis=1), n)

    recalls = [float(np.mean(first_hit < min(k, n - 1))) for k in cutoffs]
    return RetrievalReport(ks=cutoffs, recalls=recalls)


def embedding_space_density(embeddings: Any, labels: Sequence[int]) -> DensityReport:
    """
    嵌入空间密度 = 类内平均欧氏距离 / 类间平均欧氏距离

    所有嵌入重合（类间距离为 0）时密度记为 0 并给出警告
    """
    e = _as_matrix(embeddings)
    n = e.shape[0]
    y = _as_labels(labels, n)

    diffs = e[:, None, :] - e[None, :, :]
    dists = np.sqrt((diffs * diffs).sum(axis=-1))
    upper = np.triu_indices(n, k=1)
    pair_dists = dists[upper]
    same = (y[:, None] == y[None, :])[upper]

    if not np.any(same):
        raise MetricError("没有类内样本对，无法计算密度")
    if np.all(same):
        raise MetricError("没有类间样本对（至少需要 2 个类别）")

    d_intra = float(pair_dists[same].mean())
    d_inter = float(pair_dists[~same].mean())
    if d_inter == 0.0:
        logger.warning("⚠️ 类间平均距离为 0（嵌入坍缩），密度按 0 处理")
        density = 0.0
    else:
        density = d_intra / d_inter
    return DensityReport(d_intra=d_intra, d_inter=d_inter, density=density)


def spectral_decay(embeddings: Any, center: bool = True) -> SpectralReport:
    """
    谱衰减 ρ = KL(均匀分布 ‖ 归一化奇异值谱)

    Args:
        embeddings: (n, d) 嵌入矩阵
        center: 先按列去均值再做 SVD

    Raises:
        MetricError: 原始嵌入矩阵全零
    """
    e = _as_matrix(embeddings)
    if not np.any(e):
        raise MetricError("嵌入矩阵全零，谱衰减无定义")
    d = e.shape[1]
    x = e - e.mean(axis=0, keepdims=True) if center else e

    if not np.any(x):
        logger.warning("⚠️ 去均值后嵌入矩阵全零（嵌入坍缩），谱衰减按 0 处理")
        return SpectralReport(spectrum=[1.0 / d] * d, rho=0.0)

    values = np.zeros(d)
    sv = singular_values(x)
    values[: len(sv)] = sv
    values = values + Config.SPECTRAL_SMOOTHING
    spectrum = values / values.sum()

    uniform = 1.0 / d
    rho = float(np.sum(uniform * np.log(uniform / spectrum)))
    return SpectralReport(spectrum=[float(v) for v in spectrum], rho=max(rho, 0.0))
