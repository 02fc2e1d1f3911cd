"""
相关热力图导出
每个原型一份 H×W 网格：CSV（原始相关值，repr 精度）与 8 位灰度 PGM（按原型做 min-max 归一化）
"""

import logging
from pathlib import Path
from typing import List, Union

import numpy as np

from crt_encoder import CrtBranch, FeatureMap
from crt_trainer import ModelState
from synthetic_data import Sample
from tensor_autodiff import ShapeError, no_grad

logger = logging.getLogger(__name__)

MID_GRAY = 128


def to_graymap(grid: np.ndarray) -> np.ndarray:
    """min-max 归一化到 0..255；常数网格取中灰"""
    low, high = float(grid.min()), float(grid.max())
    if high - low <= 0.0:
        return np.full(grid.shape, MID_GRAY, dtype=np.uint8)
    scaled = (grid - low) / (high - low) * 255.0
    return np.clip(np.rint(scaled), 0, 255).astype(np.uint8)


def write_pgm(path: Path, pixels: np.ndarray) -> None:
    """写二进制 PGM（P5）"""
    height, width = pixels.shape
    path.write_bytes(f"P5\n{width} {height}\n255\n".encode("ascii") + pixels.tobytes())


def write_grid_csv(path: Path, grid: np.ndarray) -> None:
    rows = [",".join(repr(float(v)) for v in row) for row in grid]
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")


def export_heatmap(model: ModelState, sample: Union[Sample, FeatureMap], out_dir: Union[str, Path],
                   branch: Union[int, str] = 0) -> List[Path]:
    """
    导出一个样本在各原型上的相关热力图

    Returns:
        写出的 CSV 文件路径（每个原型一份，PGM 与之同名）
    """
    target = model.branch(branch)
    if not isinstance(target, CrtBranch):
        raise ShapeError(f"分支 {target.name} 没有原型，无法导出热力图")
    feature_map = sample.feature_map if isinstance(sample, Sample) else sample

    with no_grad():
        corr = target.correlation_map(feature_map).numpy()

    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for k, grid in enumerate(corr):
        csv_path = out_dir / f"heatmap_proto{k:03d}.csv"
        write_grid_csv(csv_path, grid)
        write_pgm(csv_path.with_suffix(".pgm"), to_graymap(grid))
        paths.append(csv_path)
    logger.info(f"💾 热力图已导出: {out_dir} ({len(paths)} 个原型)")
    return paths
