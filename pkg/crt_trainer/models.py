"""
训练器数据模型
"""

from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from crt_encoder import Branch, BranchConfig, CrtBranch
from crt_losses import LossWeights
from crt_trainer.config import Config
from tensor_autodiff import ShapeError, Tensor


class OptimizerKind(str, Enum):
    """优化器类型"""
    SGD = "sgd"
    ADAM = "adam"


class TrainConfig(BaseModel):
    """训练配置"""
    model_config = ConfigDict(extra="forbid")

    epochs: int = Field(Config.EPOCHS, ge=0)
    steps_per_epoch: int = Field(Config.STEPS_PER_EPOCH, ge=1)
    learning_rate: float = Field(Config.LEARNING_RATE, ge=0.0)
    optimizer: OptimizerKind = OptimizerKind.ADAM
    momentum: float = Field(0.0, ge=0.0, lt=1.0)
    classes_per_batch: int = Field(Config.CLASSES_PER_BATCH, ge=1)
    samples_per_class: int = Field(Config.SAMPLES_PER_CLASS, ge=1)
    share_head_weights: bool = False
    progress: bool = True
    seed: int = Field(0, ge=0)
    loss: LossWeights = Field(default_factory=LossWeights)

    @property
    def total_steps(self) -> int:
        return self.epochs * self.steps_per_epoch


@dataclass
class ModelState:
    """一组嵌入分支（第一个分支为主输出）"""
    branches: List[Branch]
    feature_dim: int
    share_head_weights: bool = False

    def __post_init__(self):
        if not 1 <= len(self.branches) <= 2:
            raise ShapeError(f"模型需要 1 或 2 个分支，实际 {len(self.branches)}")
        names = [b.name for b in self.branches]
        if len(set(names)) != len(names):
            raise ShapeError(f"分支名重复: {names}")
        for branch in self.branches:
            if branch.feature_dim != self.feature_dim:
                raise ShapeError(f"分支 {branch.name} 特征维 {branch.feature_dim} != {self.feature_dim}")

    @property
    def branch_configs(self) -> List[BranchConfig]:
        return [b.config for b in self.branches]

    @property
    def crt_branches(self) -> List[CrtBranch]:
        return [b for b in self.branches if isinstance(b, CrtBranch)]

    def branch(self, key: Any = 0) -> Branch:
        """按序号或名字取分支"""
        if isinstance(key, int):
            return self.branches[key]
        for branch in self.branches:
            if branch.name == key:
                return branch
        raise KeyError(f"没有名为 {key} 的分支")

    def named_parameters(self) -> List[Tuple[str, Tensor]]:
        """全部可训练参数；共享张量只出现一次（保留第一次出现的名字）"""
        seen = set()
        params = []
        for branch in self.branches:
            for name, tensor in branch.named_parameters():
                if id(tensor) in seen or not tensor.requires_grad:
                    continue
                seen.add(id(tensor))
                params.append((name, tensor))
        return params

    def parameter_count(self) -> int:
        return sum(t.size for _, t in self.named_parameters())

    def snapshot(self) -> Dict[str, np.ndarray]:
        return {name: t.numpy() for name, t in self.named_parameters()}

    def loss_weights(self, base: LossWeights) -> LossWeights:
        """各分支 λ₁ 取自分支配置"""
        return base.model_copy(update={"branch_ms_weights": [b.config.ms_weight for b in self.branches]})


@dataclass
class StepRecord:
    """损失日志中的一行"""
    step: int
    loss: float
    l_div: float
    l_ms1: float
    l_ms2: float
    l_con: float

    CSV_HEADER = "step,loss,L_div,L_ms1,L_ms2,L_con"

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "StepRecord":
        return cls(step=int(data["step"]), loss=float(data["loss"]), l_div=float(data["l_div"]),
                   l_ms1=float(data["l_ms1"]), l_ms2=float(data["l_ms2"]), l_con=float(data["l_con"]))

    def to_csv_row(self) -> str:
        return ",".join([str(self.step)] + [repr(v) for v in
                                            (self.loss, self.l_div, self.l_ms1, self.l_ms2, self.l_con)])


@dataclass
class LossBreakdown:
    """一个批次的总损失张量及各项数值"""
    total: Tensor
    l_div: float
    ms: List[float] = field(default_factory=list)
    l_con: float = 0.0

    @property
    def l_ms1(self) -> float:
        return self.ms[0] if self.ms else 0.0

    @property
    def l_ms2(self) -> float:
        return self.ms[1] if len(self.ms) > 1 else 0.0

    def record(self, step: int) -> StepRecord:
        return StepRecord(step=step, loss=self.total.item(), l_div=self.l_div,
                          l_ms1=self.l_ms1, l_ms2=self.l_ms2, l_con=self.l_con)


@dataclass
class ExperimentResult:
    """对照实验结果：逐种子记录 + 多数判定"""
    name: str
    records: List[Dict[str, Any]]
    wins: int
    verdict: bool
    detail: Optional[str] = None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    def to_text(self) -> str:
        lines = [f"{self.name}.seeds={len(self.records)!r}", f"{self.name}.wins={self.wins!r}",
                 f"{self.name}.verdict={self.verdict!r}"]
        for record in self.records:
            seed = record["seed"]
            for key, value in record.items():
                if key != "seed":
                    lines.append(f"{self.name}.seed{seed}.{key}={value!r}")
        return "\n".join(lines)
