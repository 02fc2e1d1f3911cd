# 配置文件
class Config:
    """泛化指标配置类"""

    # Recall@K 默认截断
    DEFAULT_KS = [1, 2, 4, 8]

    # 谱衰减中零奇异值的平滑量
    SPECTRAL_SMOOTHING = 1e-12

    # 判定零嵌入的范数阈值
    ZERO_NORM = 1e-12
