import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field
from typing import Any, Dict, List, Optional

from dotenv import load_dotenv

from .errors import ConfigError
from .lattice import BoundaryCondition
from .samplers import ChainConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

logger = logging.getLogger(__name__)

# 默认输出目录（可由环境变量 VILLAIN_OUTPUT_DIR 覆盖）
DEFAULT_OUTPUT_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.dirname(__file__))), "output")
OUTPUT_DIR_ENV = "VILLAIN_OUTPUT_DIR"

SUBCOMMANDS = ("sample", "measure", "verify", "bench", "ig", "green")
OUTPUT_FORMATS = ("json", "csv")
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def default_output_dir() -> str:
    """读取 .env 与环境变量后的默认输出目录"""
    load_dotenv()
    return os.environ.get(OUTPUT_DIR_ENV) or DEFAULT_OUTPUT_DIR


@dataclass
class RunConfig:
    """
    一次运行的完整配置

    序列化后的配置加上代码版本决定所有输出字节。
    """
    subcommand: str
    n: int = 1
    bc: str = BoundaryCondition.FREE.value
    beta: float = 1.0
    betas: List[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    root_vertex: Optional[List] = None
    root_face: Optional[List] = None
    chain: ChainConfig = field(default_factory=ChainConfig)
    output_dir: Optional[str] = None
    output_format: str = "json"
    log_level: str = "INFO"
    params: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        data = asdict(self)
        data["chain"] = self.chain.to_dict()
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> "RunConfig":
        problems = validate_run_config(data)
        if problems:
            path, message = problems[0]
            raise ConfigError(path, message)
        data = dict(data)
        chain = data.pop("chain", None) or {}
        return cls(chain=ChainConfig(**chain), **data)

    def config_hash(self) -> str:
        """规范 JSON（键排序）的 SHA-256；输出目录不参与"""
        payload = self.to_dict()
        payload.pop("output_dir", None)
        payload.pop("log_level", None)
        canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def resolved_output_dir(self) -> str:
        return self.output_dir or default_output_dir()


def load_run_config(file_path: Optional[str] = None) -> Dict:
    """
    加载运行配置文件

    Args:
        file_path: TOML 或 JSON 文件路径（按后缀判断），未提供时返回空配置

    Returns:
        配置字典（尚未校验）
    """
    if not file_path:
        return {}
    if not os.path.exists(file_path):
        raise ConfigError("config", f"配置文件不存在: {file_path}")
    suffix = os.path.splitext(file_path)[1].lower()
    try:
        if suffix == ".toml":
            with open(file_path, "rb") as fh:
                data = tomllib.load(fh)
        elif suffix == ".json":
            with open(file_path, "r", encoding="utf-8") as fh:
                data = json.load(fh)
        else:
            raise ConfigError("config", f"不支持的配置文件格式: {suffix}")
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError("config", f"配置文件解析失败: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError("config", "配置文件顶层必须是表")
    logger.debug("已加载配置文件 %s", file_path)
    return data


def _positive_number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool) and value > 0


def validate_run_config(data: Dict) -> List[tuple]:
    """
    验证配置字典

    Args:
        data: 合并后的配置字典

    Returns:
        [(字段路径, 问题描述)]，空列表表示有效
    """
    problems = []
    if data.get("subcommand") not in SUBCOMMANDS:
        problems.append(("subcommand", f"必须是 {', '.join(SUBCOMMANDS)} 之一"))
    known = {f for f in RunConfig.__dataclass_fields__}
    for key in data:
        if key not in known:
            problems.append((key, "未知字段"))
    n = data.get("n", 1)
    if not isinstance(n, int) or isinstance(n, bool) or n < 1:
        problems.append(("n", "必须是不小于 1 的整数"))
    if data.get("bc", "free") not in [b.value for b in BoundaryCondition]:
        problems.append(("bc", "必须是 free 或 zero"))
    if not _positive_number(data.get("beta", 1.0)):
        problems.append(("beta", "必须为正数"))
    for i, b in enumerate(data.get("betas", [])):
        if not _positive_number(b):
            problems.append((f"betas[{i}]", "必须为正数"))
    if data.get("output_format", "json") not in OUTPUT_FORMATS:
        problems.append(("output_format", "必须是 json 或 csv"))
    if str(data.get("log_level", "INFO")).upper() not in LOG_LEVELS:
        problems.append(("log_level", f"必须是 {', '.join(LOG_LEVELS)} 之一"))
    chain = data.get("chain") or {}
    chain_fields = set(ChainConfig.__dataclass_fields__)
    for key, value in chain.items():
        if key not in chain_fields:
            problems.append((f"chain.{key}", "未知字段"))
        elif key == "burn_in":
            if value is not None and (not isinstance(value, int) or value < 0):
                problems.append((f"chain.{key}", "必须是非负整数"))
        elif key == "seed":
            if not isinstance(value, int) or value < 0:
                problems.append((f"chain.{key}", "必须是非负整数"))
        elif not isinstance(value, int) or isinstance(value, bool) or value < 1:
            problems.append((f"chain.{key}", "必须是正整数"))
    params = data.get("params", {})
    if not isinstance(params, dict):
        problems.append(("params", "必须是表"))
    return problems


def merge_config(file_data: Dict, overrides: Dict) -> Dict:
    """命令行参数覆盖文件中的值（None 表示未给出）；chain 与 params 按键合并"""
    merged = dict(file_data)
    for key, value in overrides.items():
        if value is None:
            continue
        if key in ("chain", "params") and isinstance(value, dict):
            inner = dict(merged.get(key) or {})
            inner.update({k: v for k, v in value.items() if v is not None})
            merged[key] = inner
        else:
            merged[key] = value
    return merged


def build_run_config(file_path: Optional[str], overrides: Dict) -> RunConfig:
    """加载、合并并校验，得到 RunConfig"""
    return RunConfig.from_dict(merge_config(load_run_config(file_path), overrides))
