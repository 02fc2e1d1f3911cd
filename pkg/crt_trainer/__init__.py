"""
训练器模块

双分支 CRT 端到端训练：优化器、P×Q 批次训练循环、跨分支权重共享、
梯度校验、检查点以及在未见类别上的评估与对照实验。

使用示例：
    from crt_encoder import BranchConfig
    from crt_trainer import TrainConfig, build_model, train, evaluate
    from synthetic_data import SyntheticSpec, generate_dataset, split_classes

    spec = SyntheticSpec(seed=1)
    split = split_classes(generate_dataset(spec), spec.train_fraction)
    model = build_model([BranchConfig(name="branch1")], spec.feature_dim, seed=1)
    model, history = train(model, split.train, TrainConfig(epochs=2, seed=1))
    print(evaluate(model, split.test).to_text())
"""

from crt_trainer.checkpoint import load_checkpoint, save_checkpoint
from crt_trainer.config import Config
from crt_trainer.errors import CheckpointError
from crt_trainer.evaluation import (
    BranchEvaluation,
    EvaluationResult,
    embed_dataset,
    evaluate,
    normalize_rows,
)
from crt_trainer.experiments import (
    compare_with_baseline,
    component_ablation,
    diversity_ablation,
    heatmap_part_hits,
    part_hit_rate,
    peak_chance_rate,
    prototype_peak_cells,
)
from crt_trainer.grad_check import GradCheckEntry, GradCheckReport, grad_check
from crt_trainer.models import (
    ExperimentResult,
    LossBreakdown,
    ModelState,
    OptimizerKind,
    StepRecord,
    TrainConfig,
)
from crt_trainer.optimizers import SGD, Adam, Optimizer, make_optimizer
from crt_trainer.trainer import Trainer, build_model, compute_batch_loss, train

__version__ = "1.0.0"

__all__ = [
    "Config",
    "CheckpointError",
    # 模型与配置
    "TrainConfig",
    "OptimizerKind",
    "ModelState",
    "StepRecord",
    "LossBreakdown",
    "ExperimentResult",
    # 训练
    "build_model",
    "compute_batch_loss",
    "Trainer",
    "train",
    "Optimizer",
    "SGD",
    "Adam",
    "make_optimizer",
    # 检查点
    "save_checkpoint",
    "load_checkpoint",
    # 评估与校验
    "embed_dataset",
    "normalize_rows",
    "evaluate",
    "BranchEvaluation",
    "EvaluationResult",
    "grad_check",
    "GradCheckReport",
    "GradCheckEntry",
    # 对照实验
    "compare_with_baseline",
    "component_ablation",
    "diversity_ablation",
    "heatmap_part_hits",
    "part_hit_rate",
    "peak_chance_rate",
    "prototype_peak_cells",
]
