"""ig 子命令：整数高斯统计表、M(β) 与 K_β"""
import logging

import numpy as np

from ..utils.config_loader import RunConfig
from ..utils.ig_dist import K_beta, ig_mean_monotone_check, ig_stats_table
from .common import emit, header_for

logger = logging.getLogger(__name__)


def run(config: RunConfig) -> int:
    points = int(config.params.get("a_points", 11))
    table = ig_stats_table(config.beta, np.linspace(0.0, 0.5, points))
    body = {"monotone_mean": ig_mean_monotone_check(config.beta)}
    if config.params.get("k_beta", False):
        body["K_beta"] = K_beta(config.beta).__dict__
    emit(config, "ig", header_for(config), body, table)
    return 0
