"""
对照实验
CRT 与平均池化基线对比、多样性损失消融、一致性项组件对照、热力图部件命中检查；
每个实验按种子重复，并给出多数判定
"""

import logging
import math
from typing import Callable, Dict, List, Sequence, Tuple

import numpy as np

from crt_encoder import BranchConfig, BranchKind, FeatureMap
from crt_losses import Config as LossConfig
from crt_losses import pairwise_abs_cosine
from crt_trainer.config import Config
from crt_trainer.evaluation import evaluate
from crt_trainer.models import ExperimentResult, ModelState, TrainConfig
from crt_trainer.trainer import build_model, train
from synthetic_data import DatasetSplit, Sample, SyntheticSpec, generate_dataset, split_classes
from tensor_autodiff import no_grad

logger = logging.getLogger(__name__)


def _prepare(data_spec: SyntheticSpec, seed: int) -> DatasetSplit:
    spec = data_spec.model_copy(update={"seed": seed})
    return split_classes(generate_dataset(spec), spec.train_fraction, seed=seed)


def _train_on(split: DatasetSplit, branches: Sequence[BranchConfig], train_config: TrainConfig,
              seed: int) -> ModelState:
    config = train_config.model_copy(update={"seed": seed, "progress": False})
    model = build_model(branches, split.train.feature_dim, seed,
                        share_head_weights=config.share_head_weights)
    model, _ = train(model, split.train, config)
    return model


def _verdict(name: str, records: List[Dict], win: Callable[[Dict], bool],
             fraction: float) -> ExperimentResult:
    wins = sum(1 for r in records if win(r))
    needed = math.ceil(fraction * len(records))
    verdict = wins >= needed
    marker = "✅" if verdict else "⚠️"
    logger.info(f"{marker} {name}: {wins}/{len(records)} 个种子获胜（需要 {needed}）")
    return ExperimentResult(name=name, records=records, wins=wins, verdict=verdict,
                            detail=f"需要 {needed}/{len(records)}")


def compare_with_baseline(data_spec: SyntheticSpec, train_config: TrainConfig, branch: BranchConfig,
                          seeds: Sequence[int], ks: Sequence[int] = Config.DEFAULT_KS,
                          fraction: float = Config.MAJORITY_FRACTION) -> Tuple[ExperimentResult, ExperimentResult]:
    """
    同样的 MS 损失和训练预算下，单个 CRT 分支与平均池化线性基线在测试类别上的对比

    Returns:
        (Recall@1 对比结果, 密度与谱衰减对比结果)
    """
    crt = branch.model_copy(update={"kind": BranchKind.CRT, "ms_weight": 1.0})
    baseline = BranchConfig(name="baseline", kind=BranchKind.BASELINE, embed_dim=branch.embed_dim,
                            ms_weight=1.0)
    records = []
    for seed in seeds:
        split = _prepare(data_spec, seed)
        crt_eval = evaluate(_train_on(split, [crt], train_config, seed), split.test, ks,
                            train_classes=split.train_classes).primary
        base_eval = evaluate(_train_on(split, [baseline], train_config, seed), split.test, ks,
                             train_classes=split.train_classes).primary
        records.append({
            "seed": seed,
            "crt_recall1": crt_eval.retrieval.recalls[0],
            "baseline_recall1": base_eval.retrieval.recalls[0],
            "crt_density": crt_eval.density.density,
            "baseline_density": base_eval.density.density,
            "crt_rho": crt_eval.spectral.rho,
            "baseline_rho": base_eval.spectral.rho,
        })
        logger.info(f"📊 种子 {seed}: CRT R@1={records[-1]['crt_recall1']:.4f}, "
                    f"基线 R@1={records[-1]['baseline_recall1']:.4f}")

    recall = _verdict("recall", records, lambda r: r["crt_recall1"] > r["baseline_recall1"], fraction)
    generalization = _verdict(
        "generalization", records,
        lambda r: r["crt_density"] > r["baseline_density"] and r["crt_rho"] < r["baseline_rho"], fraction)
    return recall, generalization


def _mean_prototype_cosine(model: ModelState) -> float:
    return float(np.mean([pairwise_abs_cosine(b.prototypes) for b in model.crt_branches]))


def diversity_ablation(data_spec: SyntheticSpec, train_config: TrainConfig,
                       branches: Sequence[BranchConfig], seeds: Sequence[int],
                       fraction: float = Config.MAJORITY_FRACTION) -> ExperimentResult:
    """去掉多样性项（div_weight=0）后，原型两两 |cos| 应高于保留该项的训练"""
    ablated_config = train_config.model_copy(
        update={"loss": train_config.loss.model_copy(update={"div_weight": 0.0})})
    records = []
    for seed in seeds:
        split = _prepare(data_spec, seed)
        with_div = _mean_prototype_cosine(_train_on(split, branches, train_config, seed))
        without_div = _mean_prototype_cosine(_train_on(split, branches, ablated_config, seed))
        records.append({"seed": seed, "with_div_cos": with_div, "without_div_cos": without_div})
        logger.info(f"📊 种子 {seed}: 有多样性项 |cos|={with_div:.4f}, 无多样性项 |cos|={without_div:.4f}")
    return _verdict("diversity", records, lambda r: r["without_div_cos"] > r["with_div_cos"], fraction)


def component_ablation(data_spec: SyntheticSpec, train_config: TrainConfig,
                       branches: Sequence[BranchConfig], seeds: Sequence[int],
                       ks: Sequence[int] = Config.DEFAULT_KS,
                       fraction: float = Config.MAJORITY_FRACTION) -> ExperimentResult:
    """
    逐项叠加的组件对照：平均池化基线 → 多分支 CRT（无一致性项）→ 多分支 CRT + 一致性项

    一致性权重取 train_config 中的值（为 0 时退回默认 0.9）；
    获胜条件是加上一致性项后主分支 Recall@1 高于不加的训练

    Raises:
        ValueError: 分支少于 2 个，一致性项无从比较
    """
    if len(branches) < 2:
        raise ValueError(f"组件对照至少需要 2 个分支，实际 {len(branches)}")
    weight = train_config.loss.consistency_weight or LossConfig.CONSISTENCY_WEIGHT
    full_config = train_config.model_copy(
        update={"loss": train_config.loss.model_copy(update={"consistency_weight": weight})})
    no_con_config = train_config.model_copy(
        update={"loss": train_config.loss.model_copy(update={"consistency_weight": 0.0})})
    primary = branches[0]
    baseline = BranchConfig(name="baseline", kind=BranchKind.BASELINE, embed_dim=primary.embed_dim,
                            ms_weight=1.0)

    def recall1(model: ModelState, split: DatasetSplit) -> float:
        return evaluate(model, split.test, ks, train_classes=split.train_classes).primary.retrieval.recalls[0]

    records = []
    for seed in seeds:
        split = _prepare(data_spec, seed)
        records.append({
            "seed": seed,
            "baseline_recall1": recall1(_train_on(split, [baseline], train_config, seed), split),
            "without_con_recall1": recall1(_train_on(split, branches, no_con_config, seed), split),
            "with_con_recall1": recall1(_train_on(split, branches, full_config, seed), split),
        })
        logger.info(f"📊 种子 {seed}: 基线 R@1={records[-1]['baseline_recall1']:.4f}, "
                    f"无一致性项 R@1={records[-1]['without_con_recall1']:.4f}, "
                    f"有一致性项 R@1={records[-1]['with_con_recall1']:.4f}")
    return _verdict("component", records, lambda r: r["with_con_recall1"] > r["without_con_recall1"], fraction)


def prototype_peak_cells(model: ModelState, feature_map: FeatureMap, branch: int = 0) -> List[int]:
    """每个原型相关图最大值所在的单元（行优先下标）"""
    target = model.branch(branch)
    with no_grad():
        corr = target.correlation_map(feature_map).numpy()
    return [int(np.argmax(grid)) for grid in corr]


def part_hit_rate(model: ModelState, samples: Sequence[Sample], branch: int = 0) -> float:
    """至少一个原型的相关图最大值落在部件单元上的样本比例"""
    if not samples:
        raise ValueError("样本为空")
    if any(not s.part_cells for s in samples):
        raise ValueError("样本缺少部件单元信息，无法计算部件命中率")
    hits = 0
    for sample in samples:
        peaks = prototype_peak_cells(model, sample.feature_map, branch)
        hits += int(any(cell in sample.part_cells for cell in peaks))
    return hits / len(samples)


def peak_chance_rate(positions: int, part_count: int, num_prototypes: int) -> float:
    """各原型峰值独立均匀落在 positions 个单元上时，至少一个命中 part_count 个部件单元的概率"""
    if not 0 <= part_count <= positions:
        raise ValueError(f"部件数 {part_count} 不在 [0, {positions}] 内")
    return 1.0 - (1.0 - part_count / positions) ** num_prototypes


def heatmap_part_hits(data_spec: SyntheticSpec, train_config: TrainConfig,
                      branches: Sequence[BranchConfig], seeds: Sequence[int],
                      fraction: float = Config.MAJORITY_FRACTION) -> ExperimentResult:
    """
    训练后原型相关图峰值的部件命中率，与随机落点的命中率对照

    命中率对训练类别与测试类别的全部样本分别取平均；
    获胜条件是训练类别上的命中率高于随机基线
    """
    records = []
    for seed in seeds:
        split = _prepare(data_spec, seed)
        model = _train_on(split, branches, train_config, seed)
        chance = peak_chance_rate(data_spec.positions, data_spec.part_count,
                                  model.branch(0).prototypes.count)
        records.append({
            "seed": seed,
            "train_hit_rate": part_hit_rate(model, split.train.samples),
            "test_hit_rate": part_hit_rate(model, split.test.samples),
            "chance_rate": chance,
        })
        logger.info(f"📊 种子 {seed}: 训练类别命中率={records[-1]['train_hit_rate']:.4f}, "
                    f"测试类别命中率={records[-1]['test_hit_rate']:.4f}, 随机基线={chance:.4f}")
    return _verdict("heatmap", records, lambda r: r["train_hit_rate"] > r["chance_rate"], fraction)
