# 配置文件
class Config:
    """合成数据配置类"""

    # 桌面规模默认数据规格
    N_CLASSES = 20
    SAMPLES_PER_CLASS = 30
    HEIGHT = 4
    WIDTH = 4
    FEATURE_DIM = 32
    CLASS_SEP = 3.0
    NOISE_SIGMA = 0.5
    PART_COUNT = 3
    TRAIN_FRACTION = 0.5

    # 数据集文件格式
    DATASET_MAGIC = b"CRTDSET\0"
    DATASET_VERSION = 2
