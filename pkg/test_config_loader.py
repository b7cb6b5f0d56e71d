"""
测试配置加载、校验与合并
"""
import json

import pytest

from villain.utils.config_loader import (RunConfig, build_run_config,
                                         default_output_dir, load_run_config,
                                         merge_config, validate_run_config)
from villain.utils.errors import ConfigError
from villain.utils.samplers import ChainConfig

TOML_TEXT = """
subcommand = "measure"
n = 4
bc = "zero"
beta = 1.5

[chain]
seed = 7
sweeps = 5000
thinning = 5

[params]
observable = "two_point"
v1 = [0, 0]
v2 = [2, 0]
"""


def test_load_toml_and_json(tmp_path):
    toml_file = tmp_path / "run.toml"
    toml_file.write_text(TOML_TEXT, encoding="utf-8")
    data = load_run_config(str(toml_file))
    assert data["n"] == 4
    assert data["chain"]["sweeps"] == 5000

    json_file = tmp_path / "run.json"
    json_file.write_text(json.dumps(data), encoding="utf-8")
    assert load_run_config(str(json_file)) == data


def test_load_without_file():
    assert load_run_config() == {}
    assert load_run_config(None) == {}


@pytest.mark.parametrize("name, text", [
    ("missing.toml", None),
    ("run.yaml", "n: 1"),
    ("broken.toml", "n = ["),
    ("broken.json", "{"),
    ("list.json", "[1, 2]"),
])
def test_load_errors(tmp_path, name, text):
    path = tmp_path / name
    if text is not None:
        path.write_text(text, encoding="utf-8")
    with pytest.raises(ConfigError) as info:
        load_run_config(str(path))
    assert info.value.field == "config"


def test_validate_reports_field_paths():
    problems = validate_run_config({
        "subcommand": "plot", "n": 0, "bc": "periodic", "beta": -1.0, "betas": [1.0, 0.0],
        "output_format": "xlsx", "log_level": "chatty", "colour": "red",
        "chain": {"sweeps": 0, "seed": -3, "warmup": 10}, "params": [],
    })
    fields = {path for path, _ in problems}
    assert fields == {"subcommand", "n", "bc", "beta", "betas[1]", "output_format", "log_level",
                      "colour", "chain.sweeps", "chain.seed", "chain.warmup", "params"}


def test_validate_accepts_minimal():
    assert validate_run_config({"subcommand": "ig"}) == []
    assert validate_run_config({"subcommand": "sample", "chain": {"burn_in": None}}) == []


def test_merge_prefers_overrides():
    file_data = {"subcommand": "sample", "n": 2, "chain": {"seed": 1, "sweeps": 100},
                 "params": {"model": "villain"}}
    overrides = {"n": 3, "beta": None, "chain": {"seed": 5, "thinning": None},
                 "params": {"model": "gff", "degree": 2}}
    merged = merge_config(file_data, overrides)
    assert merged["n"] == 3
    assert "beta" not in merged
    assert merged["chain"] == {"seed": 5, "sweeps": 100}
    assert merged["params"] == {"model": "gff", "degree": 2}
    # 原字典不被修改
    assert file_data["chain"]["seed"] == 1


def test_build_run_config(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(TOML_TEXT, encoding="utf-8")
    cfg = build_run_config(str(path), {"beta": 2.0})
    assert isinstance(cfg, RunConfig)
    assert cfg.beta == 2.0
    assert cfg.chain == ChainConfig(seed=7, sweeps=5000, thinning=5)
    with pytest.raises(ConfigError) as info:
        build_run_config(str(path), {"n": -1})
    assert info.value.field == "n"


def test_config_hash_ignores_output_location():
    a = RunConfig.from_dict({"subcommand": "ig", "output_dir": "/tmp/a", "log_level": "DEBUG"})
    b = RunConfig.from_dict({"subcommand": "ig", "output_dir": "/tmp/b"})
    c = RunConfig.from_dict({"subcommand": "ig", "beta": 2.0})
    assert a.config_hash() == b.config_hash()
    assert a.config_hash() != c.config_hash()
    assert a.to_dict()["chain"]["seed"] == ChainConfig().seed


def test_output_dir_from_environment(monkeypatch, tmp_path):
    monkeypatch.setenv("VILLAIN_OUTPUT_DIR", str(tmp_path))
    assert default_output_dir() == str(tmp_path)
    cfg = RunConfig.from_dict({"subcommand": "green"})
    assert cfg.resolved_output_dir() == str(tmp_path)
    assert RunConfig.from_dict({"subcommand": "green", "output_dir": "elsewhere"}).resolved_output_dir() == "elsewhere"
