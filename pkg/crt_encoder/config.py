# 配置文件
class Config:
    """CRT 编码器配置类"""

    # 桌面规模的默认特征图尺寸 (H, W, L)
    DEFAULT_HEIGHT = 4
    DEFAULT_WIDTH = 4
    DEFAULT_FEATURE_DIM = 32

    # 两个分支的桌面规模；49/128 与 64/1024 的大规模设置同样可配置
    BRANCH1_PROTOTYPES = 8
    BRANCH1_EMBED_DIM = 32
    BRANCH2_PROTOTYPES = 12
    BRANCH2_EMBED_DIM = 64
    DEFAULT_HIDDEN_DIM = 32

    # 原型向量最小范数
    PROTOTYPE_MIN_NORM = 1e-8
