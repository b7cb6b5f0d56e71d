"""
报告与数据文件的写出

- JSON 报告带头部 {schema_version, code_version, geometry_hash, config, config_hash, seed}
- CSV 表格以 "# " 开头的注释行写入同样的头部，可用 pd.read_csv(path, comment="#") 读回
- 链快照写为 npz，头部以 JSON 字符串存放
所有写操作先写同目录下的临时文件，再用 os.replace 原子替换；内容中不含时间戳。
"""
import io
import json
import logging
import os
import tempfile
from typing import Dict, Optional

import numpy as np
import pandas as pd

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


def code_version() -> str:
    from villain import __version__
    return __version__


def make_header(config: Dict, config_hash: str, seed: Optional[int],
                geometry_hash: Optional[str] = None) -> Dict:
    return {"schema_version": SCHEMA_VERSION, "code_version": code_version(),
            "geometry_hash": geometry_hash, "config": config,
            "config_hash": config_hash, "seed": seed}


def _to_jsonable(value):
    if isinstance(value, dict):
        return {str(k): _to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return _to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, pd.DataFrame):
        return _to_jsonable(value.to_dict(orient="records"))
    if isinstance(value, float) and not np.isfinite(value):
        return str(value)
    return value


def atomic_write_bytes(path: str, data: bytes) -> str:
    """写到同目录临时文件后原子替换"""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise
    logger.info("已写出 %s", path)
    return path


def write_json_report(path: str, header: Dict, body: Dict) -> str:
    """写 JSON 报告（键排序、两格缩进）"""
    payload = {"header": _to_jsonable(header), "body": _to_jsonable(body)}
    text = json.dumps(payload, sort_keys=True, indent=2, ensure_ascii=False) + "\n"
    return atomic_write_bytes(path, text.encode("utf-8"))


def read_json_report(path: str) -> Dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_csv_table(path: str, header: Dict, table: pd.DataFrame) -> str:
    """写带注释头部的 CSV 表格"""
    buffer = io.StringIO()
    for key in sorted(header):
        buffer.write(f"# {key}: {json.dumps(_to_jsonable(header[key]), sort_keys=True, ensure_ascii=False)}\n")
    table.to_csv(buffer, index=False, lineterminator="\n")
    return atomic_write_bytes(path, buffer.getvalue().encode("utf-8"))


def read_csv_table(path: str) -> pd.DataFrame:
    return pd.read_csv(path, comment="#")


def write_trace(path: str, header: Dict, arrays: Dict[str, np.ndarray]) -> str:
    """链快照：npz 文件，header 键为 JSON 字符串"""
    buffer = io.BytesIO()
    text = json.dumps(_to_jsonable(header), sort_keys=True, ensure_ascii=False)
    np.savez_compressed(buffer, header=np.array(text), **arrays)
    return atomic_write_bytes(path, buffer.getvalue())


def read_trace(path: str) -> Dict:
    with np.load(path, allow_pickle=False) as data:
        out = {k: data[k] for k in data.files if k != "header"}
        out["header"] = json.loads(str(data["header"]))
    return out
