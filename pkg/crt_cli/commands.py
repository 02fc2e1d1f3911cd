"""
命令行入口
子命令：gen-data、train、eval、gradcheck、analyze、heatmap、compare
退出码：0 成功，1 用法错误，2 配置错误或输入文件缺失，3 数值失败（NaN、梯度校验超差）
"""

import logging
import sys
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple

import click
import numpy as np

from crt_cli.config import Config
from crt_cli.errors import ConfigError
from crt_cli.heatmap import export_heatmap
from crt_cli.run_config import RunConfig, RunConfigManager, load_environment
from crt_trainer import (
    CheckpointError,
    ModelState,
    StepRecord,
    Trainer,
    build_model,
    compare_with_baseline,
    component_ablation,
    diversity_ablation,
    embed_dataset,
    evaluate,
    grad_check,
    heatmap_part_hits,
    load_checkpoint,
    normalize_rows,
)
from gen_metrics import MetricError, embedding_space_density, recall_at_k, spectral_decay
from synthetic_data import (
    Dataset,
    DatasetError,
    DatasetSplit,
    Stream,
    generate_dataset,
    load_dataset,
    rng_stream,
    sample_batch,
    save_dataset,
    split_classes,
)
from tensor_autodiff import CrtError, NumericalError

logger = logging.getLogger(__name__)


# ==================== 公共部分 ====================

def common_options(func: Callable) -> Callable:
    """--config / --set / --seed / --out"""
    options = [
        click.option("--config", "config_path", default=None, help="配置文件路径或 configs/ 下的配置名"),
        click.option("--set", "overrides", multiple=True, metavar="KEY=VALUE", help="覆盖配置项，可重复"),
        click.option("--seed", type=click.IntRange(min=0), default=None, help="运行种子（优先于 CRT_SEED）"),
        click.option("--out", "out_dir", default=None, help="输出目录"),
    ]
    for option in reversed(options):
        func = option(func)
    return func


def _prepare(config_path: Optional[str], overrides: Sequence[str], seed: Optional[int],
             out_dir: Optional[str]) -> Tuple[RunConfig, Path]:
    manager = RunConfigManager()
    extra = list(overrides) + ([f"out={out_dir}"] if out_dir else [])
    config = manager.load(config_path, extra, seed=seed)
    out = Path(config.out)
    manager.save_effective(config, out)
    return config, out


def _dataset(config: RunConfig, data_path: Optional[str]) -> Dataset:
    if data_path:
        return load_dataset(data_path)
    return generate_dataset(config.data)


def _split(config: RunConfig, dataset: Dataset) -> DatasetSplit:
    return split_classes(dataset, config.data.train_fraction, seed=config.seed)


def _model(config: RunConfig, dataset: Dataset, checkpoint: Optional[str]) -> ModelState:
    if checkpoint:
        return load_checkpoint(checkpoint).model
    return build_model(config.branches, dataset.feature_dim, config.seed,
                       share_head_weights=config.train.share_head_weights)


def _write_loss_log(path: Path, records: List[StepRecord], append: bool) -> None:
    rows = [r.to_csv_row() for r in records]
    if append and path.exists():
        with open(path, "a", encoding="utf-8") as f:
            f.write("".join(row + "\n" for row in rows))
    else:
        path.write_text("\n".join([StepRecord.CSV_HEADER] + rows) + "\n", encoding="utf-8")


def _write_embeddings(path: Path, embeddings: np.ndarray, labels: np.ndarray) -> None:
    lines = [",".join([str(int(label))] + [repr(float(v)) for v in row])
             for label, row in zip(labels, embeddings)]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


# ==================== 命令 ====================

@click.group(context_settings={"help_option_names": ["-h", "--help"]})
@click.option("--log-level", default=None,
              type=click.Choice(["DEBUG", "INFO", "WARNING", "ERROR"], case_sensitive=False),
              help="日志级别（默认取 CRT_LOG_LEVEL，否则 INFO）")
def cli(log_level: Optional[str]) -> None:
    """CRT 度量学习引擎"""
    level_name = (log_level or load_environment().log_level or Config.DEFAULT_LOG_LEVEL).upper()
    level = getattr(logging, level_name, logging.INFO)
    logging.basicConfig(level=level, format=Config.LOG_FORMAT)
    logging.getLogger().setLevel(level)


@cli.command("gen-data")
@common_options
@click.option("--data", "data_path", default=None, help="数据集输出路径（默认 <out>/dataset.bin）")
def gen_data(config_path, overrides, seed, out_dir, data_path) -> int:
    """生成合成数据集文件"""
    config, out = _prepare(config_path, overrides, seed, out_dir)
    dataset = generate_dataset(config.data)
    save_dataset(Path(data_path) if data_path else out / Config.DATASET_FILE, dataset)
    return Config.EXIT_OK


@cli.command("train")
@common_options
@click.option("--data", "data_path", default=None, help="数据集文件（默认按配置生成）")
@click.option("--checkpoint", default=None, help="从该检查点继续训练")
def train_command(config_path, overrides, seed, out_dir, data_path, checkpoint) -> int:
    """训练模型，写出检查点与损失日志"""
    config, out = _prepare(config_path, overrides, seed, out_dir)
    dataset = _dataset(config, data_path)
    split = _split(config, dataset)

    if checkpoint:
        trainer = Trainer.from_checkpoint(checkpoint)
    else:
        trainer = Trainer(_model(config, dataset, None), config.train)
    records = trainer.fit(split.train, until_step=config.train.total_steps)

    trainer.save_checkpoint(out / Config.CHECKPOINT_FILE)
    _write_loss_log(out / Config.LOSS_LOG_FILE, records, append=bool(checkpoint))
    logger.info(f"💾 损失日志已写入: {out / Config.LOSS_LOG_FILE} ({len(records)} 步)")
    return Config.EXIT_OK


@cli.command("eval")
@common_options
@click.option("--data", "data_path", default=None, help="数据集文件（默认按配置生成）")
@click.option("--checkpoint", default=None, help="检查点（默认 <out>/checkpoint.bin）")
def eval_command(config_path, overrides, seed, out_dir, data_path, checkpoint) -> int:
    """在测试类别上评估，写出报告与嵌入"""
    config, out = _prepare(config_path, overrides, seed, out_dir)
    dataset = _dataset(config, data_path)
    split = _split(config, dataset)
    model = load_checkpoint(checkpoint or out / Config.CHECKPOINT_FILE).model

    result = evaluate(model, split.test, config.ks, train_classes=split.train_classes)
    (out / Config.REPORT_FILE).write_text(result.to_text(), encoding="utf-8")
    labels = split.test.labels_array()
    for branch in model.branches:
        embeddings = normalize_rows(embed_dataset(model, split.test, branch.name))
        _write_embeddings(out / f"embeddings_{branch.name}.csv", embeddings, labels)
    logger.info(f"💾 评估报告已写入: {out / Config.REPORT_FILE}")
    return Config.EXIT_OK


@cli.command("gradcheck")
@common_options
@click.option("--data", "data_path", default=None, help="数据集文件（默认按配置生成）")
@click.option("--checkpoint", default=None, help="检查点（默认用初始化模型）")
def gradcheck_command(config_path, overrides, seed, out_dir, data_path, checkpoint) -> int:
    """有限差分梯度校验；超出容差时退出码为 3"""
    config, out = _prepare(config_path, overrides, seed, out_dir)
    dataset = _dataset(config, data_path)
    split = _split(config, dataset)
    model = _model(config, dataset, checkpoint)

    settings = config.gradcheck
    batch = sample_batch(split.train, settings.classes_per_batch, settings.samples_per_class,
                         rng_stream(config.seed, Stream.BATCH))
    report = grad_check(model, batch, model.loss_weights(config.train.loss),
                        tolerance=settings.tolerance, max_entries=settings.max_entries)
    (out / Config.GRADCHECK_FILE).write_text(report.to_text(), encoding="utf-8")
    if not report.passed:
        logger.error(f"❌ 梯度校验超出容差: {report.max_rel_error:.3e} >= {settings.tolerance:.1e}")
        return Config.EXIT_NUMERICAL
    return Config.EXIT_OK


@cli.command("analyze")
@common_options
@click.option("--embeddings", "embeddings_path", required=True, help="eval 导出的 embeddings_<branch>.csv")
def analyze_command(config_path, overrides, seed, out_dir, embeddings_path) -> int:
    """由嵌入文件计算检索、密度与谱衰减报告"""
    config, out = _prepare(config_path, overrides, seed, out_dir)
    path = Path(embeddings_path)
    if not path.exists():
        raise FileNotFoundError(f"嵌入文件不存在: {path}")
    table = np.loadtxt(path, delimiter=",", ndmin=2)
    labels = table[:, 0].astype(np.int64)
    embeddings = table[:, 1:]

    text = "\n".join([
        f"n_samples={len(labels)!r}",
        recall_at_k(embeddings, labels, config.ks).to_text(),
        embedding_space_density(embeddings, labels).to_text(),
        spectral_decay(embeddings).to_text(),
    ]) + "\n"
    (out / Config.ANALYSIS_FILE).write_text(text, encoding="utf-8")
    logger.info(f"💾 分析报告已写入: {out / Config.ANALYSIS_FILE}")
    return Config.EXIT_OK


@cli.command("heatmap")
@common_options
@click.option("--data", "data_path", default=None, help="数据集文件（默认按配置生成）")
@click.option("--checkpoint", default=None, help="检查点（默认用初始化模型）")
@click.option("--sample-index", type=click.IntRange(min=0), default=0, help="数据集中的样本下标")
@click.option("--branch", default="0", help="分支序号或名字")
def heatmap_command(config_path, overrides, seed, out_dir, data_path, checkpoint, sample_index, branch) -> int:
    """导出一个样本在各原型上的相关热力图"""
    config, out = _prepare(config_path, overrides, seed, out_dir)
    dataset = _dataset(config, data_path)
    if sample_index >= len(dataset):
        raise DatasetError(f"样本下标 {sample_index} 超出数据集大小 {len(dataset)}")
    model = _model(config, dataset, checkpoint)
    key = int(branch) if branch.isdigit() else branch
    export_heatmap(model, dataset.samples[sample_index], out / Config.HEATMAP_DIR, branch=key)
    return Config.EXIT_OK


@cli.command("compare")
@common_options
@click.option("--experiment", type=click.Choice(["all", "baseline", "diversity", "component", "heatmap"]),
              default="all", help="要运行的对照实验")
def compare_command(config_path, overrides, seed, out_dir, experiment) -> int:
    """按多个种子运行对照实验，写出 comparison.txt"""
    config, out = _prepare(config_path, overrides, seed, out_dir)
    seeds = config.compare.seeds
    results = []
    if experiment in ("all", "baseline"):
        results.extend(compare_with_baseline(config.data, config.train, config.branches[0], seeds, config.ks))
    if experiment in ("all", "diversity"):
        results.append(diversity_ablation(config.data, config.train, config.branches, seeds))
    if experiment in ("all", "component"):
        if len(config.branches) >= 2:
            results.append(component_ablation(config.data, config.train, config.branches, seeds, config.ks))
        elif experiment == "component":
            raise ConfigError(f"组件对照至少需要 2 个分支，当前 {len(config.branches)} 个")
        else:
            logger.warning("⚠️ 只有 1 个分支，跳过组件对照")
    if experiment in ("all", "heatmap"):
        results.append(heatmap_part_hits(config.data, config.train, config.branches, seeds))
    (out / Config.COMPARISON_FILE).write_text("\n".join(r.to_text() for r in results) + "\n",
                                               encoding="utf-8")
    logger.info(f"💾 对照实验结果已写入: {out / Config.COMPARISON_FILE}")
    return Config.EXIT_OK


def run(argv: Optional[Sequence[str]] = None) -> int:
    """执行命令行并返回退出码"""
    args = list(sys.argv[1:] if argv is None else argv)
    try:
        result = cli.main(args=args, prog_name="crt", standalone_mode=False)
    except click.UsageError as e:
        e.show()
        return Config.EXIT_USAGE
    except click.ClickException as e:
        e.show()
        return Config.EXIT_USAGE
    except click.Abort:
        return Config.EXIT_USAGE
    except NumericalError as e:
        logger.error(f"❌ 数值失败（第 {e.step} 步）: {e}")
        return Config.EXIT_NUMERICAL
    except (ConfigError, DatasetError, CheckpointError, MetricError) as e:
        logger.error(f"❌ {e}")
        return Config.EXIT_CONFIG
    except OSError as e:
        logger.error(f"❌ 文件错误: {e}")
        return Config.EXIT_CONFIG
    except CrtError as e:
        logger.error(f"❌ {e}")
        return Config.EXIT_CONFIG
    return result if isinstance(result, int) else Config.EXIT_OK
