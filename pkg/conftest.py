"""pytest 配置：hypothesis 配置档、慢速测试开关与共用的小几何"""
import hypothesis
import numpy as np
import pytest

from villain.utils.lattice import build_box, build_lattice
from villain.utils.samplers import ChainConfig

np.seterr(all="warn")

hypothesis.settings.register_profile("fast", max_examples=5, deadline=None)
hypothesis.settings.register_profile("villain", max_examples=25, deadline=None)
hypothesis.settings.load_profile("villain")

# 只收集根目录的测试
collect_ignore_glob = ["examples/*", "output/*"]


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="运行较慢的统计测试")


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: 较慢的统计测试，需要 --runslow")


def pytest_collection_modifyitems(config, items):
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="需要 --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def two_vertex():
    """两顶点单边图：一个自由角"""
    return build_box(2, 1, "free")


@pytest.fixture
def box2():
    """2×2 自由盒：三个自由角、一个内部面"""
    return build_box(2, 2, "free")


@pytest.fixture
def free1():
    return build_lattice(1, "free")


@pytest.fixture
def zero1():
    return build_lattice(1, "zero")


@pytest.fixture
def quick_chain():
    return ChainConfig(seed=11, sweeps=2048, burn_in=200, block=512)
