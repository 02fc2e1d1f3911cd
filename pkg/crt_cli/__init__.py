"""
命令行模块

把配置、数据集、训练、评估、梯度校验与热力图导出串成子命令。

使用示例：
    python -m crt_cli gen-data --config default --out runs/demo
    python -m crt_cli train --config default --seed 3 --out runs/demo
    python -m crt_cli eval --config default --seed 3 --out runs/demo

    # 或在 Python 中
    from crt_cli import run
    exit_code = run(["gradcheck", "--out", "runs/gc"])
"""

from crt_cli.commands import cli, run
from crt_cli.config import Config
from crt_cli.errors import ConfigError
from crt_cli.heatmap import export_heatmap
from crt_cli.run_config import (
    CompareSettings,
    CrtEnvironment,
    GradCheckSettings,
    RunConfig,
    RunConfigManager,
    load_environment,
)

__version__ = "1.0.0"

__all__ = [
    "Config",
    "ConfigError",
    "RunConfig",
    "RunConfigManager",
    "CrtEnvironment",
    "GradCheckSettings",
    "CompareSettings",
    "load_environment",
    "export_heatmap",
    "cli",
    "run",
]
