"""
指标报告
三类报告均可序列化为扁平 key=value 文本，浮点数用 repr 保证逐位往返
"""

from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List

from gen_metrics.errors import MetricError


def _line(prefix: str, key: str, value: Any) -> str:
    return f"{prefix}{key}={value!r}"


@dataclass
class RetrievalReport:
    """Recall@K 报告"""
    ks: List[int] = field(default_factory=list)
    recalls: List[float] = field(default_factory=list)

    def recall(self, k: int) -> float:
        try:
            return self.recalls[self.ks.index(k)]
        except ValueError:
            raise MetricError(f"报告中没有 Recall@{k}，可用: {self.ks}") from None

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RetrievalReport":
        return cls(ks=[int(k) for k in data["ks"]], recalls=[float(r) for r in data["recalls"]])

    def to_text(self, prefix: str = "") -> str:
        return "\n".join(_line(prefix, f"recall@{k}", r) for k, r in zip(self.ks, self.recalls))


@dataclass
class DensityReport:
    """嵌入空间密度报告"""
    d_intra: float
    d_inter: float
    density: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "DensityReport":
        return cls(d_intra=float(data["d_intra"]), d_inter=float(data["d_inter"]),
                   density=float(data["density"]))

    def to_text(self, prefix: str = "") -> str:
        return "\n".join([
            _line(prefix, "d_intra", self.d_intra),
            _line(prefix, "d_inter", self.d_inter),
            _line(prefix, "density", self.density),
        ])


@dataclass
class SpectralReport:
    """谱衰减报告"""
    spectrum: List[float]
    rho: float

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SpectralReport":
        return cls(spectrum=[float(v) for v in data["spectrum"]], rho=float(data["rho"]))

    def to_text(self, prefix: str = "") -> str:
        spectrum = ",".join(repr(v) for v in self.spectrum)
        return "\n".join([_line(prefix, "rho", self.rho), f"{prefix}spectrum={spectrum}"])


def parse_report_text(text: str) -> Dict[str, str]:
    """
    解析 key=value 报告文本

    空行和 # 开头的行被忽略；其它不含 '=' 的行抛出 MetricError（带行号）
    """
    values: Dict[str, str] = {}
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise MetricError(f"报告第 {line_no} 行格式错误: {raw!r}")
        values[key.strip()] = value.strip()
    return values
