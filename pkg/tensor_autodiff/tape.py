"""
计算带（Tape）
记录前向运算节点，按逆序执行反向传播
每个线程持有自己的计算带，计算带不跨线程共享
"""

import logging
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import TYPE_CHECKING, Callable, Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from tensor_autodiff.config import Config
from tensor_autodiff.errors import AutodiffError

if TYPE_CHECKING:
    from tensor_autodiff.tensor import Tensor

logger = logging.getLogger(__name__)

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]


@dataclass
class TapeNode:
    """计算带节点"""
    node_id: int
    op: str
    inputs: Tuple[Optional[int], ...]
    backward_fn: Optional[BackwardFn] = None  # 叶子节点为 None


class Tape:
    """只追加的计算带，节点顺序即拓扑序"""

    def __init__(self):
        self.nodes: List[TapeNode] = []
        self.leaves: Dict[int, "Tensor"] = {}
        self.generation = 0
        self.enabled = True

    def __len__(self) -> int:
        return len(self.nodes)

    def node_for(self, tensor: "Tensor") -> Optional[int]:
        """返回张量在本计算带上的节点ID，必要时登记叶子；常量返回 None"""
        node_id = tensor.node_id_on(self)
        if node_id is not None:
            return node_id
        if tensor.requires_grad and tensor.is_leaf:
            node_id = len(self.nodes)
            self.nodes.append(TapeNode(node_id=node_id, op="leaf", inputs=()))
            self.leaves[node_id] = tensor
            tensor.attach(self, node_id)
            return node_id
        return None

    def record(self, op: str, inputs: Sequence["Tensor"], backward_fn: BackwardFn) -> Optional[int]:
        """记录一次运算；所有输入都是常量时不记录"""
        if not self.enabled:
            return None
        input_ids = tuple(self.node_for(t) for t in inputs)
        if all(i is None for i in input_ids):
            return None
        node_id = len(self.nodes)
        self.nodes.append(TapeNode(node_id=node_id, op=op, inputs=input_ids, backward_fn=backward_fn))
        return node_id

    def clear(self) -> None:
        """清空计算带；旧代次的张量随即视为脱离计算带的常量"""
        for leaf in self.leaves.values():
            leaf.detach_from(self)
        self.nodes = []
        self.leaves = {}
        self.generation += 1

    def backward(self, loss: "Tensor") -> Dict["Tensor", np.ndarray]:
        """
        从标量损失反向传播

        Args:
            loss: 计算带上的标量张量

        Returns:
            叶子张量 -> 梯度 的映射；同时写入每个叶子的 .grad
        """
        if loss.shape != ():
            raise AutodiffError(f"反向传播需要标量损失，实际形状: {loss.shape}")
        loss_id = loss.node_id_on(self)
        if loss_id is None:
            raise AutodiffError("损失不在当前计算带上（没有需要梯度的输入，或已被清空）")

        grads: Dict[int, np.ndarray] = {loss_id: np.ones((), dtype=Config.DTYPE)}
        leaf_grads: Dict[int, np.ndarray] = {}

        # 每个节点只访问一次
        for node in reversed(self.nodes[: loss_id + 1]):
            grad = grads.pop(node.node_id, None)
            if grad is None:
                continue
            if node.backward_fn is None:
                leaf_grads[node.node_id] = grad
                continue
            input_grads = node.backward_fn(grad)
            for input_id, input_grad in zip(node.inputs, input_grads):
                if input_id is None or input_grad is None:
                    continue
                if input_id in grads:
                    grads[input_id] = grads[input_id] + input_grad
                else:
                    grads[input_id] = input_grad

        result: Dict["Tensor", np.ndarray] = {}
        for node_id, leaf in self.leaves.items():
            grad = leaf_grads.get(node_id)
            if grad is None:
                grad = np.zeros(leaf.shape, dtype=Config.DTYPE)
            grad = np.array(np.broadcast_to(grad, leaf.shape), dtype=Config.DTYPE)
            leaf.grad = grad
            result[leaf] = grad

        logger.debug(f"反向传播完成: {len(self.nodes)} 个节点, {len(result)} 个叶子")
        self.clear()
        return result


_local = threading.local()


def get_tape() -> Tape:
    """当前线程的计算带"""
    tape = getattr(_local, "tape", None)
    if tape is None:
        tape = Tape()
        _local.tape = tape
    return tape


@contextmanager
def no_grad() -> Iterator[None]:
    """在此上下文内的运算不记录到计算带"""
    tape = get_tape()
    previous = tape.enabled
    tape.enabled = False
    try:
        yield
    finally:
        tape.enabled = previous


def backward(loss: "Tensor") -> Dict["Tensor", np.ndarray]:
    """对标量损失执行反向传播，结束后清空计算带"""
    tape = loss.tape if loss.tape is not None else get_tape()
    return tape.backward(loss)
