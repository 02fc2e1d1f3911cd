"""
优化器
SGD（可选动量）与 Adam；按张量身份去重，共享参数每步只更新一次
"""

import logging
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from crt_trainer.config import Config
from crt_trainer.models import OptimizerKind, TrainConfig
from tensor_autodiff import Tensor

logger = logging.getLogger(__name__)

NamedParameters = Sequence[Tuple[str, Tensor]]


class Optimizer:
    """优化器基类"""

    kind: OptimizerKind

    def __init__(self, params: NamedParameters, lr: float):
        seen = set()
        self.params: List[Tuple[str, Tensor]] = []
        for name, tensor in params:
            if id(tensor) not in seen:
                seen.add(id(tensor))
                self.params.append((name, tensor))
        self.lr = lr

    def step(self, grads: Mapping[Tensor, np.ndarray]) -> None:
        for name, tensor in self.params:
            grad = grads.get(tensor)
            if grad is None:
                grad = np.zeros(tensor.shape)
            tensor.assign(self._update(name, tensor.data, grad))

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # ==================== 状态序列化 ====================

    def state_scalars(self) -> Dict[str, Any]:
        return {"kind": self.kind.value, "lr": self.lr}

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {}

    def load_state(self, scalars: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> None:
        self.lr = float(scalars["lr"])


class SGD(Optimizer):
    """随机梯度下降；momentum=0 时为朴素 SGD"""

    kind = OptimizerKind.SGD

    def __init__(self, params: NamedParameters, lr: float, momentum: float = 0.0):
        super().__init__(params, lr)
        self.momentum = momentum
        self.velocity: Dict[str, np.ndarray] = {}

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.momentum > 0.0:
            velocity = self.momentum * self.velocity.get(name, np.zeros_like(grad)) + grad
            self.velocity[name] = velocity
            return value - self.lr * velocity
        return value - self.lr * grad

    def state_scalars(self) -> Dict[str, Any]:
        return {**super().state_scalars(), "momentum": self.momentum}

    def state_arrays(self) -> Dict[str, np.ndarray]:
        return {f"velocity.{name}": v for name, v in self.velocity.items()}

    def load_state(self, scalars: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> None:
        super().load_state(scalars, arrays)
        self.momentum = float(scalars.get("momentum", 0.0))
        self.velocity = {k[len("velocity."):]: np.array(v) for k, v in arrays.items()
                         if k.startswith("velocity.")}


class Adam(Optimizer):
    """Adam，带偏差修正"""

    kind = OptimizerKind.ADAM

    def __init__(self, params: NamedParameters, lr: float,
                 betas: Tuple[float, float] = (Config.ADAM_BETA1, Config.ADAM_BETA2),
                 eps: float = Config.ADAM_EPS):
        super().__init__(params, lr)
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m: Dict[str, np.ndarray] = {name: np.zeros(t.shape) for name, t in self.params}
        self.v: Dict[str, np.ndarray] = {name: np.zeros(t.shape) for name, t in self.params}

    def step(self, grads: Mapping[Tensor, np.ndarray]) -> None:
        self.t += 1
        super().step(grads)

    def _update(self, name: str, value: np.ndarray, grad: np.ndarray) -> np.ndarray:
        self.m[name] = self.beta1 * self.m[name] + (1.0 - self.beta1) * grad
        self.v[name] = self.beta2 * self.v[name] + (1.0 - self.beta2) * grad * grad
        m_hat = self.m[name] / (1.0 - self.beta1 ** self.t)
        v_hat = self.v[name] / (1.0 - self.beta2 ** self.t)
        return value - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)

    def state_scalars(self) -> Dict[str, Any]:
        return {**super().state_scalars(), "t": self.t, "beta1": self.beta1,
                "beta2": self.beta2, "eps": self.eps}

    def state_arrays(self) -> Dict[str, np.ndarray]:
        arrays = {f"m.{name}": m for name, m in self.m.items()}
        arrays.update({f"v.{name}": v for name, v in self.v.items()})
        return arrays

    def load_state(self, scalars: Mapping[str, Any], arrays: Mapping[str, np.ndarray]) -> None:
        super().load_state(scalars, arrays)
        self.t = int(scalars["t"])
        self.beta1 = float(scalars["beta1"])
        self.beta2 = float(scalars["beta2"])
        self.eps = float(scalars["eps"])
        for name, _ in self.params:
            self.m[name] = np.array(arrays[f"m.{name}"])
            self.v[name] = np.array(arrays[f"v.{name}"])


def make_optimizer(config: TrainConfig, params: NamedParameters,
                   lr: Optional[float] = None) -> Optimizer:
    """按训练配置创建优化器"""
    rate = config.learning_rate if lr is None else lr
    if config.optimizer == OptimizerKind.ADAM:
        return Adam(params, rate)
    if config.optimizer == OptimizerKind.SGD:
        return SGD(params, rate, momentum=config.momentum)
    raise ValueError(f"未知优化器: {config.optimizer}")
