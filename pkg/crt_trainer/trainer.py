"""
双分支端到端训练
P×Q 批采样 → 各分支前向 → 多样性/MS/一致性损失 → 反向传播 → 优化器更新
"""

import logging
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from crt_encoder import BranchConfig, CrtBranch, init_branch
from crt_losses import LossWeights, consistency_loss, diversity_loss, ms_loss, similarity_matrix, total_loss
from crt_trainer.models import LossBreakdown, ModelState, StepRecord, TrainConfig
from crt_trainer.optimizers import Optimizer, make_optimizer
from synthetic_data import Dataset, Stream, rng_stream, sample_batch
from tensor_autodiff import NumericalError, Tensor, as_tensor, backward, get_tape

logger = logging.getLogger(__name__)


def build_model(branch_configs: Sequence[BranchConfig], feature_dim: int, seed: int,
                share_head_weights: bool = False) -> ModelState:
    """
    按分支配置初始化模型

    每个分支使用独立的初始化子流 [seed, INIT, 分支序号]，
    因此一个分支的初始参数不受其它分支配置影响
    """
    branches = []
    for index, cfg in enumerate(branch_configs):
        rng = rng_stream(seed, Stream.INIT, index)
        donor = branches[0] if share_head_weights and branches else None
        branches.append(init_branch(cfg, feature_dim, rng, share_with=donor))
    return ModelState(branches=branches, feature_dim=feature_dim, share_head_weights=share_head_weights)


def compute_batch_loss(model: ModelState, features: Tensor, labels: Sequence[int],
                       weights: LossWeights) -> LossBreakdown:
    """
    计算一个批次的总损失

    Args:
        model: 模型
        features: (N, H·W, L) 特征
        labels: 长度 N 的类别
        weights: 损失权重，branch_ms_weights 与分支一一对应
    """
    sims = [similarity_matrix(branch.forward(features)) for branch in model.branches]
    ms_terms = [ms_loss(sim, labels, weights) for sim in sims]
    div_terms = [
        diversity_loss(branch.prototypes) if isinstance(branch, CrtBranch) else as_tensor(0.0)
        for branch in model.branches
    ]
    con = consistency_loss(sims[0], sims[1]) if len(sims) > 1 else as_tensor(0.0)
    total = total_loss(ms_terms, div_terms, con, weights)
    return LossBreakdown(
        total=total,
        l_div=float(sum(t.item() for t in div_terms)),
        ms=[t.item() for t in ms_terms],
        l_con=con.item(),
    )


class Trainer:
    """训练器：持有模型、优化器、批采样随机数与全局步数"""

    def __init__(self, model: ModelState, config: TrainConfig,
                 optimizer: Optional[Optimizer] = None,
                 batch_rng: Optional[np.random.Generator] = None,
                 step: int = 0):
        self.logger = logging.getLogger(__name__)
        self.model = model
        self.config = config
        self.weights = model.loss_weights(config.loss)
        self.optimizer = optimizer or make_optimizer(config, model.named_parameters())
        self.batch_rng = batch_rng if batch_rng is not None else rng_stream(config.seed, Stream.BATCH)
        self.step = step
        self.history: List[StepRecord] = []

    def train_step(self, train_data: Dataset) -> StepRecord:
        """执行一步训练；损失或梯度出现 NaN/Inf 时中止"""
        get_tape().clear()
        batch = sample_batch(train_data, self.config.classes_per_batch,
                             self.config.samples_per_class, self.batch_rng)
        breakdown = compute_batch_loss(self.model, batch.features_tensor(), batch.labels, self.weights)
        record = breakdown.record(self.step + 1)
        if not np.isfinite(record.loss):
            self.logger.error(f"❌ 第 {self.step + 1} 步损失非有限: {record.loss}")
            raise NumericalError(f"第 {self.step + 1} 步损失为 {record.loss}", step=self.step + 1)

        grads = backward(breakdown.total)
        for tensor, grad in grads.items():
            if not np.all(np.isfinite(grad)):
                self.logger.error(f"❌ 第 {self.step + 1} 步梯度非有限: {tensor.name}")
                raise NumericalError(f"第 {self.step + 1} 步梯度出现 NaN/Inf", step=self.step + 1)

        self.optimizer.step(grads)
        self.step += 1
        self.history.append(record)
        return record

    def fit(self, train_data: Dataset, until_step: Optional[int] = None) -> List[StepRecord]:
        """
        训练到 until_step（默认 epochs × steps_per_epoch）

        从检查点恢复时只执行剩余步数

        Returns:
            本次调用产生的损失记录
        """
        target = self.config.total_steps if until_step is None else until_step
        remaining = max(0, target - self.step)
        if remaining == 0:
            self.logger.info("⚠️ 没有需要执行的训练步")
            return []

        self.logger.info(
            f"🚀 开始训练: 第 {self.step + 1}-{target} 步, 优化器 {self.config.optimizer.value}, "
            f"lr={self.config.learning_rate}, 批次 {self.config.classes_per_batch}×{self.config.samples_per_class}, "
            f"参数量 {self.model.parameter_count()}")

        records = []
        show = self.config.progress and sys.stderr.isatty()
        with tqdm(total=remaining, desc="训练", disable=not show) as progress:
            for _ in range(remaining):
                record = self.train_step(train_data)
                records.append(record)
                progress.set_postfix(loss=f"{record.loss:.4f}")
                progress.update(1)
                if record.step % self.config.steps_per_epoch == 0:
                    epoch = record.step // self.config.steps_per_epoch
                    window = [r.loss for r in self.history[-self.config.steps_per_epoch:]]
                    self.logger.info(f"📊 第 {epoch} 轮平均损失: {np.mean(window):.6f}")

        self.logger.info(f"✅ 训练完成: 共 {self.step} 步, 最终损失 {records[-1].loss:.6f}")
        return records

    # ==================== 检查点 ====================

    def save_checkpoint(self, path: Union[str, Path]) -> Path:
        from crt_trainer.checkpoint import save_checkpoint
        return save_checkpoint(path, self)

    @classmethod
    def from_checkpoint(cls, path: Union[str, Path]) -> "Trainer":
        from crt_trainer.checkpoint import load_checkpoint
        return load_checkpoint(path)


def train(model: ModelState, data: Dataset, config: TrainConfig) -> Tuple[ModelState, List[StepRecord]]:
    """训练模型，返回（训练后的模型，逐步损失记录）"""
    trainer = Trainer(model, config)
    history = trainer.fit(data)
    return trainer.model, history
