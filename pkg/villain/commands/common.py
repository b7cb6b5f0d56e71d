"""子命令共用的几何构造、标签解析与输出路径"""
import logging
import os
from typing import Any, Dict, Optional

import pandas as pd

from ..utils.config_loader import RunConfig
from ..utils.errors import ConfigError
from ..utils.lattice import INFINITY, LatticeGeometry, build_lattice
from ..utils.report_io import make_header, write_csv_table, write_json_report

logger = logging.getLogger(__name__)


def parse_label(value: Any, field: str):
    """
    把配置中的胞腔标签转为几何可识别的形式

    接受 "x,y"、[x, y]、"inf" 或整数编号。
    """
    if value is None:
        return None
    if isinstance(value, (list, tuple)):
        if len(value) != 2:
            raise ConfigError(field, "坐标标签必须有两个分量")
        return tuple(float(v) if float(v) != int(float(v)) else int(float(v)) for v in value)
    if isinstance(value, int):
        return value
    text = str(value).strip()
    if text == INFINITY:
        return INFINITY
    if "," in text:
        return parse_label(text.split(","), field)
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(field, f"无法解析的标签: {value}") from exc


def geometry_from_config(config: RunConfig) -> LatticeGeometry:
    return build_lattice(config.n, config.bc,
                         root_vertex=parse_label(config.root_vertex, "root_vertex"),
                         root_face=parse_label(config.root_face, "root_face"))


def output_path(config: RunConfig, stem: str, ext: str) -> str:
    """输出文件名只依赖子命令与配置哈希"""
    name = f"{stem}_{config.config_hash()[:12]}.{ext}"
    return os.path.join(config.resolved_output_dir(), name)


def header_for(config: RunConfig, g: Optional[LatticeGeometry] = None) -> Dict:
    return make_header(config.to_dict(), config.config_hash(), config.chain.seed,
                       g.geometry_hash if g is not None else None)


def emit(config: RunConfig, stem: str, header: Dict, body: Dict,
         table: Optional[pd.DataFrame] = None) -> str:
    """按 output_format 写出：csv 需要表格，没有表格时退回 JSON"""
    if config.output_format == "csv" and table is not None:
        return write_csv_table(output_path(config, stem, "csv"), header, table)
    if table is not None:
        body = {**body, "table": table}
    return write_json_report(output_path(config, stem, "json"), header, body)
