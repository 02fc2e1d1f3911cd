"""
CRT 编码运算
相关图、编码残差、嵌入以及单分支前向传播；批量形式与逐样本形式逐位一致
"""

import logging
from typing import Sequence, Union

from crt_encoder.models import BranchConfig, EmbeddingHead, FeatureMap, PrototypeSet, ResidualCode
from tensor_autodiff import ShapeError, Tensor, gelu, matmul, softplus, stack

logger = logging.getLogger(__name__)

FeatureInput = Union[FeatureMap, Tensor]


def _feature_tensor(fm: FeatureInput) -> Tensor:
    """统一为 (H·W, L) 张量；传入 Tensor 时保留其梯度链路"""
    if isinstance(fm, FeatureMap):
        return fm.as_tensor()
    if fm.ndim != 2:
        raise ShapeError(f"单个特征图需要 (H·W, L) 张量，实际形状: {fm.shape}")
    return fm


def _check_dims(feature_dim: int, ps: PrototypeSet) -> None:
    if feature_dim != ps.dim:
        raise ShapeError(f"特征维 {feature_dim} 与原型维 {ps.dim} 不一致")


def correlation_map(fm: FeatureMap, ps: PrototypeSet) -> Tensor:
    """
    每个原型在每个位置上的相关度 c_k · x_ij

    Returns:
        形状 (K, H, W) 的张量
    """
    _check_dims(fm.dim, ps)
    corr = matmul(fm.as_tensor(), ps.prototypes.T)  # (J, K)
    return corr.T.reshape(ps.count, fm.height, fm.width)


def encode_residuals_batch(x: Tensor, prototypes: Tensor) -> Tensor:
    """
    批量编码残差 r_k = Σ_j softplus(c_k·x_j) (x_j − c_k)

    Args:
        x: (N, J, L) 特征
        prototypes: (K, L) 原型

    Returns:
        (N, K, L) 残差编码
    """
    if x.ndim != 3:
        raise ShapeError(f"批量特征需要 (N, J, L)，实际形状: {x.shape}")
    if x.shape[-1] != prototypes.shape[-1]:
        raise ShapeError(f"特征维 {x.shape[-1]} 与原型维 {prototypes.shape[-1]} 不一致")
    n, _, _ = x.shape
    k, dim = prototypes.shape

    weights = softplus(matmul(x, prototypes.T))            # (N, J, K)
    weighted = matmul(weights.transpose(0, 2, 1), x)       # (N, K, L)
    mass = weights.sum(axis=1).reshape(n, k, 1)            # (N, K, 1)
    return weighted - mass * prototypes


def encode_residuals(fm: FeatureInput, ps: PrototypeSet) -> ResidualCode:
    """单个特征图的编码残差，形状 (K, L)"""
    x = _feature_tensor(fm)
    _check_dims(x.shape[-1], ps)
    codes = encode_residuals_batch(x.reshape(1, *x.shape), ps.prototypes)
    return ResidualCode(codes=codes.reshape(ps.count, ps.dim))


def embed_batch(codes: Tensor, heads: Sequence[EmbeddingHead], cfg: BranchConfig) -> Tensor:
    """
    批量嵌入：每个残差经过嵌入头后对 K 取平均

    Args:
        codes: (N, K, L) 残差编码
        heads: per_prototype_heads 时为 K 个，否则为 1 个
        cfg: 分支配置

    Returns:
        (N, D_out) 嵌入
    """
    if codes.ndim != 3:
        raise ShapeError(f"批量残差需要 (N, K, L)，实际形状: {codes.shape}")
    n, k, dim = codes.shape
    expected = k if cfg.per_prototype_heads else 1
    if len(heads) != expected:
        raise ShapeError(f"分支 {cfg.name} 需要 {expected} 个嵌入头，实际 {len(heads)} 个")

    if not cfg.per_prototype_heads:
        return heads[0].apply(codes).mean(axis=1)

    hidden_dim = heads[0].hidden_dim
    out_dim = heads[0].out_dim
    w1 = stack([h.w1 for h in heads])                          # (K, L, D_h)
    b1 = stack([h.b1 for h in heads]).reshape(k, 1, hidden_dim)
    w2 = stack([h.w2 for h in heads])                          # (K, D_h, D_out)
    b2 = stack([h.b2 for h in heads]).reshape(k, 1, out_dim)

    per_proto = codes.transpose(1, 0, 2)                       # (K, N, L)
    hidden = gelu(matmul(per_proto, w1) + b1)
    out = matmul(hidden, w2) + b2                              # (K, N, D_out)
    return out.mean(axis=0)


def embed(rc: ResidualCode, heads: Sequence[EmbeddingHead], cfg: BranchConfig) -> Tensor:
    """单个样本的嵌入，形状 (D_out,)"""
    out = embed_batch(rc.codes.reshape(1, rc.count, rc.dim), heads, cfg)
    return out.reshape(out.shape[-1])


def forward_branch(fm: FeatureInput, ps: PrototypeSet, heads: Sequence[EmbeddingHead],
                   cfg: BranchConfig) -> Tensor:
    """单分支前向：embed(encode_residuals(fm, ps))"""
    return embed(encode_residuals(fm, ps), heads, cfg)


def forward_branch_batch(x: Tensor, ps: PrototypeSet, heads: Sequence[EmbeddingHead],
                         cfg: BranchConfig) -> Tensor:
    """批量前向，(N, J, L) -> (N, D_out)"""
    return embed_batch(encode_residuals_batch(x, ps.prototypes), heads, cfg)
