"""
命令行入口：sample | measure | verify | bench | ig | green

退出码：0 成功；1 运行错误或恒等式检查失败；2 配置错误。
"""
import argparse
import json
import logging
import sys
from typing import Dict, List, Optional

from .commands import (bench_cmd, green_cmd, ig_cmd, measure_cmd, sample_cmd,
                       verify_cmd)
from .utils.config_loader import RunConfig, build_run_config
from .utils.errors import ConfigError, VillainError

logger = logging.getLogger(__name__)

COMMANDS = {
    "sample": sample_cmd.run,
    "measure": measure_cmd.run,
    "verify": verify_cmd.run,
    "bench": bench_cmd.run,
    "ig": ig_cmd.run,
    "green": green_cmd.run,
}

# 子命令专属参数：(flag, params 键, 类型)
COMMAND_PARAMS = {
    "sample": [("--model", "model", str), ("--degree", "degree", int)],
    "measure": [("--observable", "observable", str), ("--face", "face", str),
                ("--f1", "f1", str), ("--f2", "f2", str), ("--v1", "v1", str),
                ("--v2", "v2", str), ("--edge", "edge", int), ("--radius", "radius", int),
                ("--eps", "eps", float), ("--vertex", "vertex", str), ("--lam", "lam", float),
                ("--n-list", "n_list", int), ("--alphas", "alphas", float)],
    "verify": [],
    "bench": [("--n-list", "n_list", int)],
    "ig": [("--a-points", "a_points", int)],
    "green": [("--n-list", "n_list", int), ("--harmonic-r", "harmonic_R", int)],
}

LIST_PARAMS = {"n_list", "alphas"}


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="TOML 或 JSON 配置文件")
    parser.add_argument("--n", type=int, help="盒子半径，边长 2n+1")
    parser.add_argument("--bc", choices=["free", "zero"], help="边界条件")
    parser.add_argument("--beta", type=float, help="逆温度 β")
    parser.add_argument("--betas", type=float, nargs="+", help="verify 使用的 β 列表")
    parser.add_argument("--root-vertex", help="根顶点 x,y 或 inf")
    parser.add_argument("--root-face", help="根面 x,y 或 inf")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--sweeps", type=int)
    parser.add_argument("--burn-in", type=int)
    parser.add_argument("--thinning", type=int)
    parser.add_argument("--chains", type=int)
    parser.add_argument("--workers", type=int)
    parser.add_argument("--output-dir")
    parser.add_argument("--format", dest="output_format", choices=["json", "csv"])
    parser.add_argument("--log-level", type=str.upper,
                        choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    parser.add_argument("--param", action="append", default=[], metavar="KEY=JSON",
                        help="任意附加参数，值按 JSON 解析")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="villain", description="Villain 模型与库仑气体的数值工具")
    subparsers = parser.add_subparsers(dest="subcommand", required=True)
    for name, extras in COMMAND_PARAMS.items():
        sub = subparsers.add_parser(name)
        _add_common(sub)
        for flag, key, kind in extras:
            if key in LIST_PARAMS:
                sub.add_argument(flag, dest=f"param_{key}", type=kind, nargs="+")
            else:
                sub.add_argument(flag, dest=f"param_{key}", type=kind)
        if name == "ig":
            sub.add_argument("--k-beta", dest="param_k_beta", action="store_true", default=None)
    return parser


def _parse_extra(items: List[str]) -> Dict:
    params = {}
    for item in items:
        if "=" not in item:
            raise ConfigError("params", f"--param 需要 KEY=VALUE 形式: {item}")
        key, raw = item.split("=", 1)
        try:
            params[key] = json.loads(raw)
        except json.JSONDecodeError:
            params[key] = raw
    return params


def overrides_from_args(args: argparse.Namespace) -> Dict:
    """把命令行参数整理为配置覆盖字典（None 表示未给出）"""
    values = vars(args)
    params = {k[len("param_"):]: v for k, v in values.items() if k.startswith("param_")}
    params.update(_parse_extra(values.get("param") or []))
    return {
        "subcommand": args.subcommand,
        "n": args.n,
        "bc": args.bc,
        "beta": args.beta,
        "betas": args.betas,
        "root_vertex": args.root_vertex,
        "root_face": args.root_face,
        "output_dir": args.output_dir,
        "output_format": args.output_format,
        "log_level": args.log_level,
        "chain": {"seed": args.seed, "sweeps": args.sweeps, "burn_in": args.burn_in,
                  "thinning": args.thinning, "chains": args.chains, "workers": args.workers},
        "params": params,
    }


def setup_logging(level: str) -> None:
    logging.basicConfig(level=getattr(logging, level.upper(), logging.INFO),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr, force=True)


def run(config: RunConfig) -> int:
    """执行一个已校验的配置"""
    logger.info("运行 %s（配置哈希 %s）", config.subcommand, config.config_hash()[:12])
    return COMMANDS[config.subcommand](config)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = build_run_config(args.config, overrides_from_args(args))
    except ConfigError as exc:
        setup_logging("ERROR")
        logger.error("配置错误 [%s]: %s", exc.field, exc)
        return 2
    setup_logging(config.log_level)
    try:
        return run(config)
    except ConfigError as exc:
        logger.error("配置错误 [%s]: %s", exc.field, exc)
        return 2
    except VillainError as exc:
        logger.error("运行失败: %s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
