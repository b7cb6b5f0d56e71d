"""verify 子命令：精确恒等式套件，任何一项失败则返回非零"""
import logging

from ..utils.config_loader import RunConfig
from ..utils.errors import ConfigError
from ..utils.oracle import OracleConfig, identity_suite
from .common import emit, geometry_from_config, header_for

logger = logging.getLogger(__name__)


def run(config: RunConfig) -> int:
    g = geometry_from_config(config)
    betas = list(config.betas)
    try:
        oracle_cfg = OracleConfig(**config.params.get("oracle", {}))
    except TypeError as exc:
        raise ConfigError("params.oracle", str(exc)) from exc
    results = identity_suite(g, betas, seed=config.chain.seed, cfg=oracle_cfg)
    failed = [r["name"] for r in results if r["status"] == "fail"]
    passed = sum(r["status"] == "pass" for r in results)
    skipped = sum(r["status"] == "skipped" for r in results)
    status = "fail" if failed else "pass"
    emit(config, "verify", header_for(config, g),
         {"status": status, "passed": passed, "skipped": skipped, "failed": failed,
          "checks": results})
    if failed:
        logger.error("恒等式检查失败: %s", ", ".join(failed))
        return 1
    logger.info("恒等式检查全部通过（%d 项，跳过 %d 项）", passed, skipped)
    return 0
