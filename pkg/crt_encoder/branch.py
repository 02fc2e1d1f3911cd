"""
嵌入分支
CRT 分支（原型 + 嵌入头）与平均池化基线分支，以及参数初始化
"""

import logging
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from crt_encoder.encoder import correlation_map, forward_branch_batch
from crt_encoder.models import BranchConfig, BranchKind, EmbeddingHead, FeatureMap, PrototypeSet
from tensor_autodiff import ShapeError, Tensor, matmul

logger = logging.getLogger(__name__)

NamedParameters = List[Tuple[str, Tensor]]


class CrtBranch:
    """一个 CRT 嵌入分支"""

    def __init__(self, config: BranchConfig, prototypes: PrototypeSet, heads: Sequence[EmbeddingHead]):
        if config.kind != BranchKind.CRT:
            raise ShapeError(f"分支 {config.name} 不是 CRT 分支")
        if prototypes.count != config.num_prototypes:
            raise ShapeError(f"分支 {config.name} 需要 {config.num_prototypes} 个原型，实际 {prototypes.count}")
        if len(heads) != config.head_count:
            raise ShapeError(f"分支 {config.name} 需要 {config.head_count} 个嵌入头，实际 {len(heads)}")
        for head in heads:
            if head.in_dim != prototypes.dim or head.out_dim != config.embed_dim:
                raise ShapeError(
                    f"分支 {config.name} 嵌入头形状 {head.in_dim}->{head.out_dim} "
                    f"与配置 {prototypes.dim}->{config.embed_dim} 不符")
        self.config = config
        self.prototypes = prototypes
        self.heads: List[EmbeddingHead] = list(heads)

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def feature_dim(self) -> int:
        return self.prototypes.dim

    def forward(self, x: Tensor) -> Tensor:
        return forward_branch_batch(x, self.prototypes, self.heads, self.config)

    def correlation_map(self, fm: FeatureMap) -> Tensor:
        return correlation_map(fm, self.prototypes)

    def named_parameters(self) -> NamedParameters:
        params: NamedParameters = [(f"{self.name}.prototypes", self.prototypes.prototypes)]
        for k, head in enumerate(self.heads):
            params.extend(head.named_parameters(f"{self.name}.heads.{k}"))
        return params


class BaselineBranch:
    """基线：空间平均池化后接线性层"""

    def __init__(self, config: BranchConfig, weight: Tensor, bias: Tensor):
        if weight.ndim != 2 or bias.shape != (weight.shape[1],):
            raise ShapeError(f"基线分支参数形状不匹配: {weight.shape}, {bias.shape}")
        if weight.shape[1] != config.embed_dim:
            raise ShapeError(f"基线分支输出维 {weight.shape[1]} != {config.embed_dim}")
        self.config = config
        self.weight = weight
        self.bias = bias

    @property
    def name(self) -> str:
        return self.config.name

    @property
    def feature_dim(self) -> int:
        return int(self.weight.shape[0])

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.feature_dim:
            raise ShapeError(f"基线分支输入形状错误: {x.shape}")
        return matmul(x.mean(axis=1), self.weight) + self.bias

    def named_parameters(self) -> NamedParameters:
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]


Branch = Union[CrtBranch, BaselineBranch]


# ==================== 初始化 ====================

def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


def init_prototypes(count: int, dim: int, rng: np.random.Generator, name: str = "prototypes") -> PrototypeSet:
    """原型取单位球面上的随机方向"""
    values = rng.normal(size=(count, dim))
    values /= np.linalg.norm(values, axis=1, keepdims=True)
    return PrototypeSet(Tensor(values, requires_grad=True, name=name))


def init_head(in_dim: int, hidden_dim: int, out_dim: int, rng: np.random.Generator,
              shared: Optional[EmbeddingHead] = None) -> EmbeddingHead:
    """
    随机初始化嵌入头

    Args:
        shared: 给定时复用其第一层 (w1, b1) 张量
    """
    if shared is not None:
        w1, b1 = shared.w1, shared.b1
    else:
        w1 = Tensor(_glorot(rng, in_dim, hidden_dim), requires_grad=True)
        b1 = Tensor(np.zeros(hidden_dim), requires_grad=True)
    w2 = Tensor(_glorot(rng, hidden_dim, out_dim), requires_grad=True)
    b2 = Tensor(np.zeros(out_dim), requires_grad=True)
    return EmbeddingHead(w1=w1, b1=b1, w2=w2, b2=b2)


def identity_head(dim: int) -> EmbeddingHead:
    """
    恒等映射嵌入头，仅用于测试

    GELU 不是恒等函数，这里利用 x = gelu(x) − gelu(−x)：
    第一层输出 [x, −x]，第二层做差。
    """
    eye = np.eye(dim)
    return EmbeddingHead(
        w1=Tensor(np.hstack([eye, -eye])),
        b1=Tensor(np.zeros(2 * dim)),
        w2=Tensor(np.vstack([eye, -eye])),
        b2=Tensor(np.zeros(dim)),
    )


def init_baseline(config: BranchConfig, feature_dim: int, rng: np.random.Generator) -> BaselineBranch:
    """初始化平均池化基线分支"""
    weight = Tensor(_glorot(rng, feature_dim, config.embed_dim), requires_grad=True)
    bias = Tensor(np.zeros(config.embed_dim), requires_grad=True)
    logger.info(f"✅ 初始化基线分支 {config.name}: L={feature_dim}, D_out={config.embed_dim}")
    return BaselineBranch(config, weight, bias)


def init_branch(config: BranchConfig, feature_dim: int, rng: np.random.Generator,
                share_with: Optional[Branch] = None) -> Branch:
    """
    按配置初始化一个分支

    Args:
        config: 分支配置
        feature_dim: 输入特征维 L
        rng: 随机数生成器
        share_with: 另一个 CRT 分支；隐藏维一致时复用其嵌入头第一层
    """
    if config.kind == BranchKind.BASELINE:
        return init_baseline(config, feature_dim, rng)

    prototypes = init_prototypes(config.num_prototypes, feature_dim, rng, name=f"{config.name}.prototypes")
    donors: List[EmbeddingHead] = []
    if isinstance(share_with, CrtBranch):
        donors = [h for h in share_with.heads if h.hidden_dim == config.hidden_dim]
        if not donors:
            logger.warning(f"⚠️ 分支 {config.name} 隐藏维与 {share_with.name} 不一致，不共享嵌入头")
    heads = [
        init_head(feature_dim, config.hidden_dim, config.embed_dim, rng,
                  shared=donors[k % len(donors)] if donors else None)
        for k in range(config.head_count)
    ]
    logger.info(
        f"✅ 初始化 CRT 分支 {config.name}: K={config.num_prototypes}, D_h={config.hidden_dim}, "
        f"D_out={config.embed_dim}, 嵌入头={len(heads)}{', 共享第一层' if donors else ''}")
    return CrtBranch(config, prototypes, heads)
