# 配置文件
class Config:
    """损失函数配置类"""

    # Multi-Similarity 损失超参数（沿用 MS 损失原作的设置）
    MS_ALPHA = 2.0
    MS_BETA = 50.0
    MS_MARGIN = 1.0
    MS_EPSILON = 0.1

    # 各分支 MS 损失权重 λ₁、一致性损失权重 λ₂、多样性损失权重
    BRANCH_MS_WEIGHTS = [1.0, 0.1]
    CONSISTENCY_WEIGHT = 0.9
    DIV_WEIGHT = 1.0

    # 相似度矩阵不变量容差
    SIMILARITY_TOL = 1e-10
