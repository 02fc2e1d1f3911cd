"""
检查点读写
格式（小端）：magic "CRTCKPT\\0" | u32 版本 | u32 头部长度 | UTF-8 JSON 头部 |
float64 数组（模型参数，随后是优化器状态）| 8 字节 xxh64 校验
"""

import json
import logging
import struct
from pathlib import Path
from typing import Any, Dict, List, Tuple, Union

import numpy as np
import xxhash

from crt_encoder import BranchConfig
from crt_trainer.config import Config
from crt_trainer.errors import CheckpointError
from crt_trainer.models import TrainConfig
from crt_trainer.optimizers import make_optimizer
from crt_trainer.trainer import Trainer, build_model

logger = logging.getLogger(__name__)

_PREAMBLE = struct.Struct("<8sII")
_DIGEST = struct.Struct("<Q")


def _array_entries(arrays: List[Tuple[str, np.ndarray]]) -> List[Dict[str, Any]]:
    return [{"name": name, "shape": list(array.shape)} for name, array in arrays]


def save_checkpoint(path: Union[str, Path], trainer: Trainer) -> Path:
    """保存模型参数、优化器状态、全局步数与批采样随机数状态"""
    path = Path(path)
    model = trainer.model
    params = [(name, tensor.data) for name, tensor in model.named_parameters()]
    optimizer_arrays = sorted(trainer.optimizer.state_arrays().items())

    header = {
        "branches": [cfg.model_dump(mode="json") for cfg in model.branch_configs],
        "feature_dim": model.feature_dim,
        "share_head_weights": model.share_head_weights,
        "train": trainer.config.model_dump(mode="json"),
        "step": trainer.step,
        "rng_state": trainer.batch_rng.bit_generator.state,
        "optimizer": trainer.optimizer.state_scalars(),
        "parameters": _array_entries(params),
        "optimizer_arrays": _array_entries(optimizer_arrays),
    }
    header_bytes = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")

    chunks = [_PREAMBLE.pack(Config.CHECKPOINT_MAGIC, Config.CHECKPOINT_VERSION, len(header_bytes)),
              header_bytes]
    for _, array in params + optimizer_arrays:
        chunks.append(np.ascontiguousarray(array, dtype="<f8").tobytes())
    body = b"".join(chunks)
    digest = _DIGEST.pack(xxhash.xxh64(body).intdigest())

    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(body + digest)
    except OSError as e:
        logger.error(f"❌ 写入检查点失败 {path}: {e}")
        raise CheckpointError(f"无法写入检查点 {path}: {e}") from e

    logger.info(f"💾 检查点已保存: {path} (第 {trainer.step} 步, {len(params)} 个参数张量)")
    return path


def _read_arrays(body: bytes, offset: int, entries: List[Dict[str, Any]]) -> Tuple[Dict[str, np.ndarray], int]:
    arrays = {}
    for entry in entries:
        shape = tuple(int(s) for s in entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        if offset + count * 8 > len(body):
            raise CheckpointError(f"检查点数据不足: {entry['name']}")
        arrays[entry["name"]] = np.frombuffer(body, dtype="<f8", count=count, offset=offset) \
            .reshape(shape).astype(np.float64)
        offset += count * 8
    return arrays, offset


def load_checkpoint(path: Union[str, Path]) -> Trainer:
    """
    读取检查点并重建训练器，继续训练与不中断的运行逐位一致

    Raises:
        FileNotFoundError: 文件不存在
        CheckpointError: magic、版本、长度或校验和不符
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"检查点不存在: {path}")
    raw = path.read_bytes()
    if len(raw) < _PREAMBLE.size + _DIGEST.size:
        raise CheckpointError(f"检查点文件过短: {path}")

    body, stored = raw[: -_DIGEST.size], raw[-_DIGEST.size:]
    magic, version, header_len = _PREAMBLE.unpack_from(body)
    if magic != Config.CHECKPOINT_MAGIC:
        raise CheckpointError(f"不是检查点文件（magic={magic!r}）: {path}")
    if version != Config.CHECKPOINT_VERSION:
        raise CheckpointError(f"不支持的检查点版本 {version}: {path}")
    if xxhash.xxh64(body).intdigest() != _DIGEST.unpack(stored)[0]:
        logger.error(f"❌ 检查点校验和不符: {path}")
        raise CheckpointError(f"检查点校验和不符: {path}")

    try:
        header = json.loads(body[_PREAMBLE.size: _PREAMBLE.size + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointError(f"检查点头部无法解析: {e}") from e

    offset = _PREAMBLE.size + header_len
    params, offset = _read_arrays(body, offset, header["parameters"])
    optimizer_arrays, offset = _read_arrays(body, offset, header["optimizer_arrays"])
    if offset != len(body):
        raise CheckpointError(f"检查点长度与头部声明不符: {path}")

    config = TrainConfig.model_validate(header["train"])
    branch_configs = [BranchConfig.model_validate(b) for b in header["branches"]]
    model = build_model(branch_configs, int(header["feature_dim"]), config.seed,
                        share_head_weights=bool(header["share_head_weights"]))
    named = dict(model.named_parameters())
    if set(named) != set(params):
        raise CheckpointError(f"检查点参数与模型结构不符: {sorted(set(named) ^ set(params))}")
    for name, tensor in named.items():
        tensor.assign(params[name])

    optimizer = make_optimizer(config, model.named_parameters())
    optimizer.load_state(header["optimizer"], optimizer_arrays)

    rng = np.random.default_rng()
    rng.bit_generator.state = header["rng_state"]

    logger.info(f"✅ 检查点已加载: {path} (第 {header['step']} 步)")
    return Trainer(model, config, optimizer=optimizer, batch_rng=rng, step=int(header["step"]))
