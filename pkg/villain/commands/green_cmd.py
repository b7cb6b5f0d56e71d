"""green 子命令：Green 函数渐近表与调和延拓能量"""
import logging

from ..utils.calculus import green_asymptotics_table, harmonic_two_point
from ..utils.config_loader import RunConfig
from .common import emit, header_for

logger = logging.getLogger(__name__)


def run(config: RunConfig) -> int:
    ns = [int(n) for n in config.params.get("n_list", [64, 128, 256])]
    table = green_asymptotics_table(ns)
    spread = float(table["G00_minus_log"].max() - table["G00_minus_log"].min())
    body = {"spread": spread}
    radius = config.params.get("harmonic_R")
    if radius is not None:
        _, energy = harmonic_two_point(int(radius))
        body["harmonic_R"] = int(radius)
        body["harmonic_energy"] = energy
    emit(config, "green", header_for(config), body, table)
    return 0
