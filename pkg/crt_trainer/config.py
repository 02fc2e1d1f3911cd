# 配置文件
class Config:
    """训练器配置类"""

    # 桌面规模默认训练设置
    EPOCHS = 10
    STEPS_PER_EPOCH = 25
    LEARNING_RATE = 1e-3
    CLASSES_PER_BATCH = 8   # P
    SAMPLES_PER_CLASS = 4   # Q

    # Adam
    ADAM_BETA1 = 0.9
    ADAM_BETA2 = 0.999
    ADAM_EPS = 1e-8

    # 梯度校验
    GRAD_CHECK_TOLERANCE = 1e-4
    GRAD_CHECK_MAX_ENTRIES = 20
    GRAD_CHECK_FLOOR = 1e-3
    GRAD_CHECK_STEP = 1e-5

    # 推理分块大小
    EMBED_CHUNK = 64

    # 评估
    DEFAULT_KS = [1, 2, 4, 8]

    # 检查点格式
    CHECKPOINT_MAGIC = b"CRTCKPT\0"
    CHECKPOINT_VERSION = 1

    # 对照实验：多数判定所需的获胜比例
    MAJORITY_FRACTION = 0.8
