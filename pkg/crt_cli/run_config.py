"""
运行配置管理
扁平的点分 key=value 配置（data.*、train.*、loss.*、branch1.*、branch2.* 等），
支持 .env/.conf、YAML 与 JSON 文件，命令行 --set 覆盖，以及 CRT_SEED 环境变量
"""

import json
import logging
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Tuple, Type

import yaml
from dotenv import dotenv_values
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from crt_cli.config import Config
from crt_cli.errors import ConfigError
from crt_encoder import BranchConfig, Config as EncoderConfig
from crt_losses import LossWeights
from crt_trainer import Config as TrainerConfig, TrainConfig
from synthetic_data import SyntheticSpec

logger = logging.getLogger(__name__)

# 键 -> (值, 行号)
Entries = Dict[str, Tuple[Any, Optional[int]]]


class CrtEnvironment(BaseSettings):
    """环境变量：CRT_SEED、CRT_LOG_LEVEL"""
    model_config = SettingsConfigDict(env_prefix="CRT_", env_file=".env", env_file_encoding="utf-8",
                                      extra="ignore")

    seed: Optional[int] = Field(None, ge=0)
    log_level: Optional[str] = None


class GradCheckSettings(BaseModel):
    """梯度校验设置"""
    model_config = ConfigDict(extra="forbid")

    tolerance: float = Field(TrainerConfig.GRAD_CHECK_TOLERANCE, gt=0.0)
    max_entries: int = Field(TrainerConfig.GRAD_CHECK_MAX_ENTRIES, ge=1)
    classes_per_batch: int = Field(4, ge=1)
    samples_per_class: int = Field(3, ge=1)


class CompareSettings(BaseModel):
    """对照实验设置"""
    model_config = ConfigDict(extra="forbid")

    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4])


# 各分支的默认规模
_BRANCH_DEFAULTS: Dict[str, Dict[str, Any]] = {
    "branch1": {"num_prototypes": EncoderConfig.BRANCH1_PROTOTYPES,
                "embed_dim": EncoderConfig.BRANCH1_EMBED_DIM, "ms_weight": 1.0},
    "branch2": {"num_prototypes": EncoderConfig.BRANCH2_PROTOTYPES,
                "embed_dim": EncoderConfig.BRANCH2_EMBED_DIM, "ms_weight": 0.1},
}


def default_branch(name: str) -> BranchConfig:
    return BranchConfig(name=name, **_BRANCH_DEFAULTS.get(name, {}))


class RunConfig(BaseModel):
    """一次运行的完整配置"""
    model_config = ConfigDict(extra="forbid")

    seed: int = Field(0, ge=0)
    out: str = "runs/default"
    ks: List[int] = Field(default_factory=lambda: list(TrainerConfig.DEFAULT_KS))
    branches: List[BranchConfig] = Field(
        default_factory=lambda: [default_branch("branch1"), default_branch("branch2")])
    data: SyntheticSpec = Field(default_factory=SyntheticSpec)
    train: TrainConfig = Field(default_factory=TrainConfig)
    gradcheck: GradCheckSettings = Field(default_factory=GradCheckSettings)
    compare: CompareSettings = Field(default_factory=CompareSettings)

    def to_flat(self) -> Dict[str, str]:
        """展开为扁平 key=value；重新加载可得到同一配置"""
        flat = {
            "seed": str(self.seed),
            "out": self.out,
            "eval.ks": _format_value(self.ks),
            "model.branches": ",".join(b.name for b in self.branches),
        }
        sections = [("data", self.data), ("train", self.train), ("loss", self.train.loss),
                    ("gradcheck", self.gradcheck), ("compare", self.compare)]
        sections.extend((b.name, b) for b in self.branches)
        for section, model in sections:
            excluded = _EXCLUDED.get(section, _BRANCH_EXCLUDED)
            for name, value in model.model_dump(mode="json").items():
                if name not in excluded:
                    flat[f"{section}.{name}"] = _format_value(value)
        return flat


# 不能直接配置的字段（由其它键派生）
_EXCLUDED: Dict[str, set] = {
    "data": {"seed"},
    "train": {"seed", "loss"},
    "loss": {"branch_ms_weights"},
    "gradcheck": set(),
    "compare": set(),
}
_BRANCH_EXCLUDED = {"name"}
_SECTION_MODELS: Dict[str, Type[BaseModel]] = {
    "data": SyntheticSpec,
    "train": TrainConfig,
    "loss": LossWeights,
    "gradcheck": GradCheckSettings,
    "compare": CompareSettings,
}
_LIST_FIELDS = {"eval.ks", "compare.seeds"}


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(v) for v in value)
    return str(value)


def _parse_int_list(value: Any, key: str, line: Optional[int]) -> List[int]:
    items = value if isinstance(value, (list, tuple)) else str(value).split(",")
    try:
        return [int(str(item).strip()) for item in items if str(item).strip()]
    except ValueError:
        raise ConfigError(f"需要逗号分隔的整数列表，实际: {value!r}", key=key, line=line) from None


def _flatten(data: Mapping[str, Any], prefix: str = "") -> Dict[str, Any]:
    flat: Dict[str, Any] = {}
    for key, value in data.items():
        full = f"{prefix}{key}"
        if isinstance(value, Mapping):
            flat.update(_flatten(value, f"{full}."))
        else:
            flat[full] = value
    return flat


def _validate_section(model_cls: Type[BaseModel], section: str, fields: Entries,
                      extra: Optional[Dict[str, Any]] = None) -> Any:
    payload = {name: value for name, (value, _) in fields.items()}
    payload.update(extra or {})
    try:
        return model_cls.model_validate(payload)
    except ValidationError as e:
        error = e.errors()[0]
        name = str(error["loc"][0]) if error["loc"] else None
        key = f"{section}.{name}" if name else section
        line = fields[name][1] if name in fields else None
        raise ConfigError(f"配置值无效: {error['msg']}", key=key, line=line) from e


class RunConfigManager:
    """运行配置管理器：查找、读取、缓存、校验配置文件"""

    def __init__(self, config_dir: Optional[str] = None):
        self.logger = logging.getLogger(__name__)
        if config_dir:
            self.config_dir = Path(config_dir)
        else:
            # 默认配置目录：项目根目录下的 configs
            self.config_dir = Path(__file__).parent.parent / "configs"
        self._cache: Dict[Tuple[Path, float], Entries] = {}

    def available_configs(self) -> List[str]:
        """配置目录下的全部配置名"""
        suffixes = Config.FLAT_SUFFIXES + Config.YAML_SUFFIXES + Config.JSON_SUFFIXES
        if not self.config_dir.exists():
            return []
        return sorted({p.stem for p in self.config_dir.iterdir() if p.suffix.lower() in suffixes})

    def find_config(self, name_or_path: str) -> Path:
        """按路径或配置名查找配置文件"""
        path = Path(name_or_path)
        if path.exists():
            return path
        for suffix in Config.FLAT_SUFFIXES + Config.YAML_SUFFIXES + Config.JSON_SUFFIXES:
            candidate = self.config_dir / f"{name_or_path}{suffix}"
            if candidate.exists():
                return candidate
        raise FileNotFoundError(f"配置文件不存在: {name_or_path}")

    def read_entries(self, path: Path) -> Entries:
        """读取配置文件为 键 -> (值, 行号)"""
        cache_key = (path.resolve(), path.stat().st_mtime)
        if cache_key in self._cache:
            self.logger.debug(f"从缓存加载配置: {path}")
            return dict(self._cache[cache_key])

        suffix = path.suffix.lower()
        try:
            text = path.read_text(encoding="utf-8")
            if suffix in Config.YAML_SUFFIXES:
                data = yaml.safe_load(text) or {}
                entries = {k: (v, None) for k, v in _flatten(data).items()}
            elif suffix in Config.JSON_SUFFIXES:
                entries = {k: (v, None) for k, v in _flatten(json.loads(text)).items()}
            else:
                entries = self._read_flat(path, text)
        except (yaml.YAMLError, json.JSONDecodeError, AttributeError) as e:
            self.logger.error(f"❌ 读取配置文件失败: {path} - {e}")
            raise ConfigError(f"配置文件无法解析: {e}") from e

        self._cache[cache_key] = entries
        self.logger.info(f"✅ 读取配置文件: {path} ({len(entries)} 个键)")
        return dict(entries)

    @staticmethod
    def _read_flat(path: Path, text: str) -> Entries:
        lines: Dict[str, int] = {}
        for line_no, raw in enumerate(text.splitlines(), start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if line.startswith("export "):
                line = line[len("export "):]
            key, sep, _ = line.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"需要 key=value，实际: {raw.strip()!r}", line=line_no)
            lines[key.strip()] = line_no
        values = dotenv_values(path, interpolate=False)
        return {key: ("" if value is None else value, lines.get(key)) for key, value in values.items()}

    def build(self, entries: Entries) -> RunConfig:
        """由扁平键构建并校验 RunConfig"""
        top: Dict[str, Any] = {}
        branch_names = ["branch1", "branch2"]
        if "model.branches" in entries:
            value, line = entries["model.branches"]
            names = value if isinstance(value, (list, tuple)) else str(value).split(",")
            branch_names = [str(n).strip() for n in names if str(n).strip()]
            if not 1 <= len(branch_names) <= 2 or len(set(branch_names)) != len(branch_names):
                raise ConfigError(f"model.branches 需要 1 或 2 个不同的分支名: {value!r}",
                                  key="model.branches", line=line)
            reserved = [n for n in branch_names if n in _SECTION_MODELS or n in ("model", "eval")]
            if reserved:
                raise ConfigError(f"分支名与配置段冲突: {reserved}", key="model.branches", line=line)

        sections: Dict[str, Entries] = {name: {} for name in list(_SECTION_MODELS) + branch_names}
        for key, (value, line) in entries.items():
            if key == "model.branches":
                continue
            if key == "seed":
                try:
                    top["seed"] = int(str(value).strip())
                except ValueError:
                    raise ConfigError(f"seed 需要非负整数，实际: {value!r}", key=key, line=line) from None
                continue
            if key == "out":
                top["out"] = str(value)
                continue
            if key == "eval.ks":
                top["ks"] = _parse_int_list(value, key, line)
                continue
            section, dot, name = key.partition(".")
            if not dot or section not in sections:
                raise ConfigError("未知配置键", key=key, line=line)
            excluded = _EXCLUDED.get(section, _BRANCH_EXCLUDED)
            if name in excluded:
                raise ConfigError("该键由其它配置派生，不能直接设置", key=key, line=line)
            if key in _LIST_FIELDS:
                value = _parse_int_list(value, key, line)
            sections[section][name] = (value, line)

        seed = top.get("seed", 0)
        if seed < 0:
            raise ConfigError(f"seed 必须非负: {seed}", key="seed", line=entries["seed"][1])

        branches = []
        for name in branch_names:
            base = default_branch(name).model_dump()
            base.update({k: v for k, (v, _) in sections[name].items()})
            fields = {k: (v, sections[name].get(k, (None, None))[1]) for k, v in base.items()}
            branches.append(_validate_section(BranchConfig, name, fields))

        loss = _validate_section(LossWeights, "loss", sections["loss"],
                                 {"branch_ms_weights": [b.ms_weight for b in branches]})
        train = _validate_section(TrainConfig, "train", sections["train"], {"seed": seed, "loss": loss})
        data = _validate_section(SyntheticSpec, "data", sections["data"], {"seed": seed})
        gradcheck = _validate_section(GradCheckSettings, "gradcheck", sections["gradcheck"])
        compare = _validate_section(CompareSettings, "compare", sections["compare"])

        try:
            return RunConfig(seed=seed, branches=branches, data=data, train=train,
                             gradcheck=gradcheck, compare=compare,
                             **{k: v for k, v in top.items() if k != "seed"})
        except ValidationError as e:
            error = e.errors()[0]
            key = "eval.ks" if error["loc"] and error["loc"][0] == "ks" else str(error["loc"][0])
            raise ConfigError(f"配置值无效: {error['msg']}", key=key) from e

    def load(self, path: Optional[str] = None, overrides: Iterable[str] = (),
             seed: Optional[int] = None, env: Optional[CrtEnvironment] = None) -> RunConfig:
        """
        加载运行配置

        种子优先级：seed 参数（--seed）> CRT_SEED > 配置文件中的 seed > 0

        Args:
            path: 配置文件路径或配置名；None 时使用内置默认值
            overrides: "key=value" 形式的覆盖项
            seed: 命令行种子
            env: 环境设置，默认从环境变量读取
        """
        entries: Entries = self.read_entries(self.find_config(path)) if path else {}
        for item in overrides:
            key, sep, value = item.partition("=")
            if not sep or not key.strip():
                raise ConfigError(f"--set 需要 key=value，实际: {item!r}", key=item)
            entries[key.strip()] = (value.strip(), None)

        if seed is not None:
            entries["seed"] = (seed, None)
        else:
            environment = env if env is not None else load_environment()
            if environment.seed is not None:
                entries["seed"] = (environment.seed, None)

        config = self.build(entries)
        self.logger.info(f"✅ 运行配置就绪: seed={config.seed}, 分支={[b.name for b in config.branches]}")
        return config

    def save_effective(self, config: RunConfig, out_dir: Path) -> Path:
        """把生效配置写成扁平 key=value 文件"""
        path = Path(out_dir) / Config.EFFECTIVE_CONFIG_FILE
        lines = ["# 生效的运行配置（自动生成，可直接作为 --config 重新运行）"]
        lines.extend(f"{key}={value}" for key, value in sorted(config.to_flat().items()))
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as e:
            self.logger.error(f"❌ 写入生效配置失败: {path} - {e}")
            raise
        self.logger.info(f"💾 生效配置已写入: {path}")
        return path


def load_environment() -> CrtEnvironment:
    """读取 CRT_* 环境变量"""
    try:
        return CrtEnvironment()
    except ValidationError as e:
        error = e.errors()[0]
        name = str(error["loc"][0]).upper() if error["loc"] else "SEED"
        raise ConfigError(f"环境变量无效: {error['msg']}", key=f"CRT_{name}") from e
