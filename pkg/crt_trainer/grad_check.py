"""
梯度校验
对总损失做中心有限差分，与自动微分梯度逐参数组比较
"""

import logging
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from crt_losses import LossWeights
from crt_trainer.config import Config
from crt_trainer.models import ModelState
from crt_trainer.trainer import compute_batch_loss
from synthetic_data import Batch
from tensor_autodiff import backward, central_difference, get_tape, no_grad, relative_error

logger = logging.getLogger(__name__)


@dataclass
class GradCheckEntry:
    """一个参数组的校验结果"""
    group: str
    max_rel_error: float
    checked: int


@dataclass
class GradCheckReport:
    """梯度校验报告"""
    entries: List[GradCheckEntry] = field(default_factory=list)
    tolerance: float = Config.GRAD_CHECK_TOLERANCE

    @property
    def max_rel_error(self) -> float:
        return max((e.max_rel_error for e in self.entries), default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_rel_error < self.tolerance

    def to_dict(self) -> Dict[str, Any]:
        return {"entries": [asdict(e) for e in self.entries], "tolerance": self.tolerance,
                "max_rel_error": self.max_rel_error, "passed": self.passed}

    def to_text(self) -> str:
        lines = [f"tolerance={self.tolerance!r}", f"max_rel_error={self.max_rel_error!r}",
                 f"passed={self.passed!r}"]
        for entry in self.entries:
            lines.append(f"{entry.group}.max_rel_error={entry.max_rel_error!r}")
            lines.append(f"{entry.group}.checked={entry.checked!r}")
        return "\n".join(lines) + "\n"


def grad_check(model: ModelState, batch: Batch, weights: LossWeights,
               tolerance: float = Config.GRAD_CHECK_TOLERANCE,
               max_entries: int = Config.GRAD_CHECK_MAX_ENTRIES,
               step: float = Config.GRAD_CHECK_STEP,
               floor: float = Config.GRAD_CHECK_FLOOR,
               rng: Optional[np.random.Generator] = None) -> GradCheckReport:
    """
    校验总损失对每个参数组的梯度

    误差为 |a − n| / max(|a|, |n|, floor)：|梯度| ≥ floor 的元素按纯相对误差评判，
    更小的元素按缩放后的绝对误差 |a − n| / floor 评判

    Args:
        model: 模型（参数在校验结束后恢复原值）
        batch: 用于计算损失的批次
        weights: 损失权重
        tolerance: 相对误差容差
        max_entries: 每个参数组最多抽查的元素数
        step: 差分步长
        floor: 相对误差分母的下限，低于它的梯度改按绝对误差评判
        rng: 抽查元素的随机数生成器，默认种子 0
    """
    rng = rng if rng is not None else np.random.default_rng(0)
    features = batch.features_tensor()
    labels: Sequence[int] = batch.labels

    get_tape().clear()
    grads = backward(compute_batch_loss(model, features, labels, weights).total)

    report = GradCheckReport(tolerance=tolerance)
    for name, param in model.named_parameters():
        analytic = grads.get(param, np.zeros(param.shape))
        original = param.numpy()

        if param.size <= max_entries:
            flat = np.arange(param.size)
        else:
            flat = np.sort(rng.choice(param.size, size=max_entries, replace=False))
        indices = [np.unravel_index(int(i), param.shape) for i in flat]

        def loss_at(values: np.ndarray) -> float:
            param.assign(values)
            with no_grad():
                return compute_batch_loss(model, features, labels, weights).total.item()

        try:
            numeric = central_difference(loss_at, original, step=step, indices=indices)
        finally:
            param.assign(original)

        errors = relative_error(np.array([analytic[i] for i in indices]),
                                np.array([numeric[i] for i in indices]), floor=floor)
        entry = GradCheckEntry(group=name, max_rel_error=float(errors.max()), checked=len(indices))
        report.entries.append(entry)
        logger.debug(f"{name}: 最大相对误差 {entry.max_rel_error:.3e} ({entry.checked} 个元素)")

    level = logging.INFO if report.passed else logging.WARNING
    marker = "✅" if report.passed else "⚠️"
    logger.log(level, f"{marker} 梯度校验: 最大相对误差 {report.max_rel_error:.3e} (容差 {tolerance:.1e})")
    return report
