"""
CRT 编码器模块

编码残差变换：特征图与可学习原型做相关，经 softplus 加权聚合残差，
再由嵌入头映射到度量空间。

使用示例：
    import numpy as np
    from crt_encoder import BranchConfig, init_branch
    from tensor_autodiff import Tensor

    rng = np.random.default_rng(0)
    branch = init_branch(BranchConfig(name="branch1"), feature_dim=32, rng=rng)
    x = Tensor(rng.normal(size=(4, 16, 32)))
    embeddings = branch.forward(x)   # (4, 32)
"""

from crt_encoder.branch import (
    BaselineBranch,
    Branch,
    CrtBranch,
    identity_head,
    init_baseline,
    init_branch,
    init_head,
    init_prototypes,
)
from crt_encoder.config import Config
from crt_encoder.encoder import (
    correlation_map,
    embed,
    embed_batch,
    encode_residuals,
    encode_residuals_batch,
    forward_branch,
    forward_branch_batch,
)
from crt_encoder.models import (
    BranchConfig,
    BranchKind,
    EmbeddingHead,
    FeatureMap,
    PrototypeSet,
    ResidualCode,
)

__version__ = "1.0.0"

__all__ = [
    "Config",
    "BranchConfig",
    "BranchKind",
    "FeatureMap",
    "PrototypeSet",
    "ResidualCode",
    "EmbeddingHead",
    "correlation_map",
    "encode_residuals",
    "encode_residuals_batch",
    "embed",
    "embed_batch",
    "forward_branch",
    "forward_branch_batch",
    "CrtBranch",
    "BaselineBranch",
    "Branch",
    "init_branch",
    "init_baseline",
    "init_head",
    "init_prototypes",
    "identity_head",
]
