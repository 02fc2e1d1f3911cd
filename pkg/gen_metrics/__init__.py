"""
泛化指标模块

检索评估 Recall@K，以及衡量泛化能力的嵌入空间密度与谱衰减。

使用示例：
    from gen_metrics import recall_at_k, embedding_space_density, spectral_decay

    report = recall_at_k(embeddings, labels, ks=[1, 2, 4, 8])
    print(report.to_text(prefix="branch1."))
"""

from gen_metrics.config import Config
from gen_metrics.errors import MetricError
from gen_metrics.metrics import embedding_space_density, recall_at_k, spectral_decay
from gen_metrics.reports import DensityReport, RetrievalReport, SpectralReport, parse_report_text

__version__ = "1.0.0"

__all__ = [
    "Config",
    "MetricError",
    "RetrievalReport",
    "DensityReport",
    "SpectralReport",
    "parse_report_text",
    "recall_at_k",
    "embedding_space_density",
    "spectral_decay",
]
