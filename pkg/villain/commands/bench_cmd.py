"""bench 子命令：局部采样器与非局部 Metropolis 的效率比较"""
import logging

import pandas as pd

from ..utils.config_loader import RunConfig
from ..utils.estimators import sampler_benchmark
from ..utils.lattice import build_lattice
from .common import emit, header_for

logger = logging.getLogger(__name__)


def run(config: RunConfig) -> int:
    ns = [int(n) for n in config.params.get("n_list", [config.n])]
    tables = []
    for n in ns:
        g = build_lattice(n, config.bc)
        tables.append(sampler_benchmark(g, config.beta, config.chain))
    table = pd.concat(tables, ignore_index=True)
    emit(config, "bench", header_for(config), {"n_list": ns}, table)
    return 0
