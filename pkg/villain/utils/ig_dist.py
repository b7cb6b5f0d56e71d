"""
整数值高斯分布 N^IG(a, β) 及误差函数

P[X = k] ∝ exp(-β(k - a)^2 / 2)，k ∈ ℤ。
所有求和在 |k - round(a)| ≤ K 处截断，K 由高斯尾界确定，舍去的相对质量 < 1e-15。
"""
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Dict, Optional, Tuple

import numpy as np
import pandas as pd
from scipy.optimize import minimize_scalar

from .errors import InvalidParameterError

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * np.pi
TWO_PI_SQ = TWO_PI ** 2


@dataclass(frozen=True)
class IGParams:
    a: float
    beta: float

    def __post_init__(self):
        _check_beta(self.beta)


@dataclass(frozen=True)
class IGStats:
    mean: float
    var: float
    third: float


def _check_beta(beta) -> None:
    if not np.all(np.asarray(beta) > 0) or not np.all(np.isfinite(beta)):
        raise InvalidParameterError(f"β 必须为正数，收到 {beta}")


def truncation_radius(beta: float) -> int:
    """截断半径 K：β(K - 1/2)^2/2 - β/8 ≥ 36 保证尾部相对质量 < 1e-15"""
    _check_beta(beta)
    return int(math.ceil(0.5 + math.sqrt((80.0 + beta / 4.0) / beta))) + 1


def _weights(a: np.ndarray, beta: float) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (k - a, 归一化前的权重)，最后一维为支撑"""
    K = truncation_radius(beta)
    offsets = np.arange(-K, K + 1, dtype=float)
    ks = np.round(a)[..., None] + offsets
    x = ks - a[..., None]
    logw = -0.5 * beta * x * x
    w = np.exp(logw - logw.max(axis=-1, keepdims=True))
    return x, w


def ig_moments(a, beta: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    向量化计算均值、方差、三阶绝对中心矩

    Args:
        a: 中心（标量或数组）
        beta: 逆温度

    Returns:
        (mu, var, T)，形状与 a 相同
    """
    _check_beta(beta)
    a = np.asarray(a, dtype=float)
    x, w = _weights(a, beta)
    z = w.sum(axis=-1)
    shift = (x * w).sum(axis=-1) / z
    dev = x - shift[..., None]
    var = (dev * dev * w).sum(axis=-1) / z
    third = (np.abs(dev) ** 3 * w).sum(axis=-1) / z
    return a + shift, var, third


def ig_variance(a, beta: float) -> np.ndarray:
    return ig_moments(a, beta)[1]


def ig_stats(p: IGParams) -> IGStats:
    """单个参数下的 (μ^IG, Var^IG, T^IG)"""
    mu, var, third = ig_moments(p.a, p.beta)
    return IGStats(mean=float(mu), var=float(var), third=float(third))


def ig_pmf(a: float, beta: float, ks: np.ndarray) -> np.ndarray:
    """给定整数点上的概率"""
    _check_beta(beta)
    ks = np.asarray(ks, dtype=float)
    x, w = _weights(np.asarray(a, dtype=float), beta)
    z = w.sum()
    return np.exp(-0.5 * beta * (ks - a) ** 2 + 0.5 * beta * np.min(x * x)) / z


def ig_sample(p: IGParams, rng: np.random.Generator, size=None) -> np.ndarray:
    """从 N^IG(a, β) 精确采样（截断表上的逆 CDF）"""
    a = np.full(size, p.a, dtype=float) if size is not None else np.asarray(p.a, dtype=float)
    out = ig_sample_array(a, p.beta, rng)
    return out if size is not None else int(out)


def ig_sample_array(a: np.ndarray, beta: float, rng: np.random.Generator) -> np.ndarray:
    """
    对数组 a 中每个中心各抽一个 N^IG(a_i, β)

    每个元素恰好消耗一个均匀数，保证按种子可复现；u < 1 使下标落在表内。
    """
    _check_beta(beta)
    a = np.asarray(a, dtype=float)
    x, w = _weights(a, beta)
    cdf = np.cumsum(w, axis=-1)
    total = cdf[..., -1]
    u = rng.random(a.shape)
    idx = (cdf < (u * total)[..., None]).sum(axis=-1)
    ks = np.take_along_axis(x, idx[..., None], axis=-1)[..., 0] + a
    return np.round(ks).astype(np.int64)


# ----------------------------------------------------------------------
# 误差函数与界
# ----------------------------------------------------------------------
@lru_cache(maxsize=4096)
def _error_function_M(beta: float) -> Tuple[float, float]:
    big = TWO_PI_SQ * beta
    grid = np.linspace(0.0, 0.5, 51)
    values = ig_variance(grid, big)
    i = int(np.argmin(values))
    lo, hi = grid[max(i - 1, 0)], grid[min(i + 1, len(grid) - 1)]
    best_a, best_v = float(grid[i]), float(values[i])
    res = minimize_scalar(lambda t: float(ig_variance(t, big)), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-9})
    if res.success and res.fun < best_v:
        best_a, best_v = float(res.x), float(res.fun)
    return big * best_v, best_a


def error_function_M(beta: float) -> float:
    """
    M(β) = (2π)^2 β · inf_{a∈[0,1/2]} Var^IG(a, (2π)^2 β)

    下确界先在 51 点网格上定位，再在相邻网格区间内做有界一维极小化（a 容差 1e-9）；
    不假设极小点在 a = 0。
    """
    _check_beta(beta)
    return _error_function_M(float(beta))[0]


def error_function_argmin(beta: float) -> float:
    """M(β) 中下确界的经验极小点"""
    _check_beta(beta)
    return _error_function_M(float(beta))[1]


def M_lower_bound(beta: float) -> float:
    """显式下界 2β·exp(-(2π)^2 β / 2)（β ≥ 1/3 时成立）"""
    return 2.0 * beta * math.exp(-TWO_PI_SQ * beta / 2.0)


def M_upper_proxy(beta: float) -> float:
    """a = 0 处的值 (2π)^2 β·Var^IG(0, (2π)^2 β)，是 M(β) 的上界"""
    return TWO_PI_SQ * beta * float(ig_variance(0.0, TWO_PI_SQ * beta))


def ig_lower_bound(a, beta: float, refined: bool = False):
    """
    Var^IG(a, β) 的显式下界（β > 10，a ∈ [0, 1/2]）

    Args:
        refined: 为真时加上 (1/32)e^{-β}sinh^2(βa) 项
    """
    a = np.asarray(a, dtype=float)
    bound = np.exp(-beta * (1.0 - 2.0 * a) / 2.0) / 16.0
    if refined:
        bound = bound + np.exp(-beta) * np.sinh(beta * a) ** 2 / 32.0
    return bound


@dataclass
class KBetaResult:
    value: float
    grid_sup: float
    tail_cap: float
    grid: Dict = field(default_factory=dict)


def K_beta(beta: float, a_grid: Optional[np.ndarray] = None,
           beta_grid: Optional[np.ndarray] = None, beta_cap: Optional[float] = None) -> KBetaResult:
    """
    K_β = sup_{β̂ ≥ β} sup_a T^IG / Var^IG 的数值近似

    网格覆盖 β̂ ∈ [β, β_cap]，β_cap 以上用极限带 2 + 4e^{-3β_cap/4} 封顶。
    由周期性与反射对称，a 只需取 [0, 1/2]。
    """
    _check_beta(beta)
    if beta_cap is None:
        beta_cap = max(4.0 * beta, 60.0)
    if a_grid is None:
        a_grid = np.linspace(0.0, 0.5, 101)
    if beta_grid is None:
        beta_grid = np.geomspace(beta, beta_cap, 40)
    a_grid = np.asarray(a_grid, dtype=float)
    ratios = []
    for b in np.asarray(beta_grid, dtype=float):
        _, var, third = ig_moments(a_grid, b)
        ratios.append(third / var)
    grid_sup = float(np.max(ratios))
    tail_cap = 2.0 + 4.0 * math.exp(-0.75 * beta_cap)
    return KBetaResult(
        value=max(grid_sup, tail_cap), grid_sup=grid_sup, tail_cap=tail_cap,
        grid={"a": [float(a_grid.min()), float(a_grid.max()), len(a_grid)],
              "beta": [float(np.min(beta_grid)), float(np.max(beta_grid)), len(beta_grid)],
              "beta_cap": float(beta_cap)})


def jacobi_residual(beta: float) -> float:
    """|1 - (2π)^2 β·Var^IG(0, (2π)^2 β) - β^{-1}·Var^IG(0, β^{-1})|"""
    _check_beta(beta)
    left = TWO_PI_SQ * beta * float(ig_variance(0.0, TWO_PI_SQ * beta))
    right = float(ig_variance(0.0, 1.0 / beta)) / beta
    return abs(1.0 - left - right)


def ig_mean_monotone_check(beta: float, a_grid: Optional[np.ndarray] = None) -> bool:
    """μ^IG(a, β) 在 [0, 1/2] 上单调不减且取值于 [0, 1/2]"""
    if a_grid is None:
        a_grid = np.linspace(0.0, 0.5, 51)
    mu, _, _ = ig_moments(a_grid, beta)
    tol = 1e-12
    return bool(np.all(np.diff(mu) >= -tol) and mu.min() >= -tol and mu.max() <= 0.5 + tol)


def ig_stats_table(beta: float, a_grid: Optional[np.ndarray] = None,
                   with_M: bool = True) -> pd.DataFrame:
    """
    生成 (a, mu, var, T, T/var) 统计表

    Args:
        beta: 逆温度
        a_grid: 中心网格，默认 [0, 1/2] 上 11 点
        with_M: 是否附加 M(β) 及其经验极小点列

    Returns:
        pd.DataFrame
    """
    if a_grid is None:
        a_grid = np.linspace(0.0, 0.5, 11)
    mu, var, third = ig_moments(np.asarray(a_grid, dtype=float), beta)
    table = pd.DataFrame({"a": a_grid, "mu": mu, "var": var, "T": third, "T_over_var": third / var})
    table.insert(0, "beta", beta)
    if with_M:
        table["M"] = error_function_M(beta)
        table["M_argmin_a"] = error_function_argmin(beta)
        table["M_lower_bound"] = M_lower_bound(beta)
        table["jacobi_residual"] = jacobi_residual(beta)
    return table
