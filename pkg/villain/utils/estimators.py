"""
Monte Carlo 测量模块

每个估计量都从若干条独立链得到一条观测序列，误差用批均值（≥ 32 批），
积分自相关时间用 statsmodels 的 acf 加自洽窗口。链按编号顺序合并，结果与并行与否无关。
"""
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import statsmodels.api as sm
from statsmodels.tsa.stattools import acf

from .calculus import (Form, d_matrix, get_solver, green, green_matrix,
                       solve_poisson)
from .errors import InvalidParameterError
from .ig_dist import (TWO_PI, TWO_PI_SQ, M_upper_proxy, error_function_M,
                      ig_variance)
from .lattice import (BoundaryCondition, Label, LatticeGeometry,
                      build_lattice, dual_geometry, window_edges)
from .samplers import (ChainConfig, charges_from_m, coulomb_local_blocks,
                       ivgff_blocks, metropolis_blocks, sample_m_batch,
                       spawn_rngs, villain_theta_blocks)
from .transforms import decouple_batch

logger = logging.getLogger(__name__)

MIN_BATCHES = 32
# 自洽窗口常数：取最小的 W 使 W ≥ c·τ(W)
SOKAL_WINDOW = 5.0


@dataclass
class EstimateReport:
    """
    单个估计量的报告

    Args:
        value: 点估计
        stderr: 批均值标准误差
        n_samples: 样本数（所有链合计）
        tau_int: 积分自相关时间（各链平均）
        seed: 主种子
        config_hash: 链配置哈希
        extras: 用于比较的解析量（界、精确因子等）
    """
    value: float
    stderr: float
    n_samples: int
    tau_int: float
    seed: int
    config_hash: str
    extras: Dict = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return asdict(self)

    def z_score(self, reference: float) -> float:
        """(value - reference)/stderr，stderr 为 0 时按是否相等给出 0 或 ±inf"""
        if self.stderr == 0:
            return 0.0 if self.value == reference else math.copysign(math.inf, self.value - reference)
        return (self.value - reference) / self.stderr


# ----------------------------------------------------------------------
# 误差分析
# ----------------------------------------------------------------------
def batch_means(series: np.ndarray, n_batches: int = MIN_BATCHES) -> Tuple[float, float]:
    """
    批均值估计

    Returns:
        (均值, 标准误差)
    """
    x = np.asarray(series, dtype=float)
    if n_batches < MIN_BATCHES:
        raise InvalidParameterError(f"批数至少为 {MIN_BATCHES}")
    if len(x) < n_batches:
        raise InvalidParameterError(f"样本数 {len(x)} 少于批数 {n_batches}")
    size = len(x) // n_batches
    means = x[:size * n_batches].reshape(n_batches, size).mean(axis=1)
    return float(x.mean()), float(means.std(ddof=1) / math.sqrt(n_batches))


def integrated_autocorr_time(series: np.ndarray, c: float = SOKAL_WINDOW) -> float:
    """
    τ_int = 1 + 2Σ_{t=1}^{W} ρ(t)，独立样本时为 1

    常数序列返回 1。
    """
    x = np.asarray(series, dtype=float)
    if len(x) < 4 or np.allclose(x, x[0]):
        return 1.0
    rho = acf(x, nlags=min(len(x) - 1, 10_000), fft=True)
    tau = 1.0
    for w in range(1, len(rho)):
        tau += 2.0 * rho[w]
        if w >= c * tau:
            break
    return float(max(tau, 1e-12))


def tau_stderr(tau: float, n: int, c: float = SOKAL_WINDOW) -> float:
    """τ_int 的近似标准误差 τ·√(2(2W+1)/N)，W ≈ c·τ"""
    window = c * tau
    return float(tau * math.sqrt(2.0 * (2.0 * window + 1.0) / max(n, 1)))


def make_report(chains: List[np.ndarray], cfg: ChainConfig, extras: Optional[Dict] = None) -> EstimateReport:
    """由各链序列构造报告（序列按链编号拼接）"""
    merged = np.concatenate([np.asarray(s, dtype=float) for s in chains])
    value, stderr = batch_means(merged)
    tau = float(np.mean([integrated_autocorr_time(s) for s in chains]))
    return EstimateReport(value=value, stderr=stderr, n_samples=len(merged), tau_int=tau,
                          seed=cfg.seed, config_hash=cfg.config_hash(), extras=extras or {})


def make_variance_report(chains: List[np.ndarray], cfg: ChainConfig,
                         extras: Optional[Dict] = None) -> EstimateReport:
    """Var 的估计：对 (x - x̄)² 做批均值"""
    merged = np.concatenate([np.asarray(s, dtype=float) for s in chains])
    centre = merged.mean()
    squares = [(np.asarray(s, dtype=float) - centre) ** 2 for s in chains]
    return make_report(squares, cfg, extras)


def exact_report(value: float, cfg: ChainConfig, extras: Optional[Dict] = None) -> EstimateReport:
    """不需要采样就精确已知的量"""
    return EstimateReport(value=float(value), stderr=0.0, n_samples=0, tau_int=1.0,
                          seed=cfg.seed, config_hash=cfg.config_hash(), extras=extras or {})


def run_chains(worker: Callable, cfg: ChainConfig, *args) -> List:
    """
    以主种子派生的独立生成器运行 cfg.chains 条链

    worker(rng, *args) 必须是模块级函数（进程池需要可序列化）。
    返回值按链编号排列。
    """
    rngs = spawn_rngs(cfg.seed, cfg.chains)
    if cfg.workers > 1 and cfg.chains > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(worker, rng, *args) for rng in rngs]
            return [f.result() for f in futures]
    return [worker(rng, *args) for rng in rngs]


# ----------------------------------------------------------------------
# 链工作函数（模块级，供进程池使用）
# ----------------------------------------------------------------------
def _potential_chain(rng, g, beta, cfg, potential, codiff):
    """⟨q, Δ^{-1}w⟩ 序列与逐样本的改进界被积量 Σ_e Var^IG(-dθ/2π)·c_e²"""
    values, improved, mtilde = [], [], np.zeros(g.num_edges)
    count = 0
    d0 = d_matrix(g, 0)
    for thetas in villain_theta_blocks(g, beta, cfg, rng):
        ms = sample_m_batch(g, thetas, beta, rng)
        qs = charges_from_m(g, ms)
        values.append(qs @ potential)
        var = ig_variance(-(d0 @ thetas.T).T / TWO_PI, TWO_PI_SQ * beta)
        improved.append(var @ (codiff ** 2))
        mtilde += var.sum(axis=0)
        count += len(thetas)
    return np.concatenate(values), np.concatenate(improved), TWO_PI_SQ * beta * mtilde / count


def _observable_chain(rng, g, beta, cfg, fn):
    return np.concatenate([fn(thetas, sample_m_batch(g, thetas, beta, rng))
                           for thetas in villain_theta_blocks(g, beta, cfg, rng)])


def _theta_chain(rng, g, beta, cfg, fn):
    return np.concatenate([fn(thetas) for thetas in villain_theta_blocks(g, beta, cfg, rng)])


def _ivgff_chain(rng, g, inv_temp, cfg, fn):
    return np.concatenate([fn(psis) for psis in ivgff_blocks(g, inv_temp, cfg, rng)])


def _check_beta(beta: float) -> None:
    if not beta > 0 or not math.isfinite(beta):
        raise InvalidParameterError(f"β 必须为正数，收到 {beta}")


def _face_form(g: LatticeGeometry, weights) -> Form:
    if isinstance(weights, Form):
        if weights.degree != 2 or weights.geometry is not g:
            raise InvalidParameterError("权重必须是同一几何上的 2-形式")
        return Form(2, weights.values.astype(float), g)
    return Form.rooted(g, 2, np.asarray(weights, dtype=float))


# ----------------------------------------------------------------------
# 库仑气体
# ----------------------------------------------------------------------
def coulomb_potential_variance(g: LatticeGeometry, weights, beta: float,
                               cfg: ChainConfig) -> EstimateReport:
    """
    Var[⟨Δ^{-1}q, w⟩]（局部采样器），w 为 g 的面上的实 2-形式

    extras 给出下界 M(β)/((2π)²β)·⟨w, (-Δ)^{-1}w⟩ 以及用逐边 M̃ 得到的改进界
    (1/((2π)²β))·Σ_e M̃(β,e)·(d*Δ^{-1}w(e))²。
    """
    _check_beta(beta)
    w = _face_form(g, weights)
    if not np.any(w.values):
        return exact_report(0.0, cfg, {"lower_bound": 0.0, "improved_bound": 0.0, "green_norm": 0.0})
    potential = solve_poisson(w)
    green_norm = -float(w.values @ potential.values)
    codiff = -(d_matrix(g, 1).T @ potential.values)
    m_beta = error_function_M(beta)
    results = run_chains(_potential_chain, cfg, g, beta, cfg, potential.values, codiff)
    improved = make_report([r[1] for r in results], cfg)
    mtilde = np.mean([r[2] for r in results], axis=0)
    extras = {
        "lower_bound": m_beta / (TWO_PI_SQ * beta) * green_norm,
        "improved_bound": improved.value,
        "improved_bound_stderr": improved.stderr,
        "green_norm": green_norm,
        "M": m_beta,
        "mtilde_min": float(mtilde.min()),
        "mtilde_mean": float(mtilde.mean()),
    }
    report = make_variance_report([r[0] for r in results], cfg, extras)
    logger.info("Var[⟨Δ^-1 q, w⟩] = %.6g ± %.2g（下界 %.6g）", report.value, report.stderr,
                extras["lower_bound"])
    return report


def coulomb_variance_improved_bound(g: LatticeGeometry, weights, beta: float,
                                    cfg: ChainConfig) -> EstimateReport:
    """改进界本身作为估计量"""
    report = coulomb_potential_variance(g, weights, beta, cfg)
    extras = report.extras
    return EstimateReport(value=extras["improved_bound"], stderr=extras.get("improved_bound_stderr", 0.0),
                          n_samples=report.n_samples, tau_int=report.tau_int, seed=report.seed,
                          config_hash=report.config_hash,
                          extras={"variance": report.value, "variance_stderr": report.stderr})


def effective_gff_temperature(report: EstimateReport) -> float:
    """使 GFF 复现所测势方差的逆温度 ⟨w,(-Δ)^{-1}w⟩ / Var[⟨Δ^{-1}q, w⟩]（诊断量）"""
    if report.value <= 0:
        return math.inf
    return report.extras["green_norm"] / report.value


def coulomb_char_function(g: LatticeGeometry, f1: Label, f2: Label, beta: float,
                          cfg: ChainConfig) -> EstimateReport:
    """
    E[cos 2π(Δ^{-1}q(f1) - Δ^{-1}q(f2))]

    extras["bound_shape"] = exp(-½·M(β)/(2(2π)²β)·⟨δ, (-Δ)^{-1}δ⟩)，δ = 1_{f1} - 1_{f2}，
    常数因子未知，只作形状比较。
    """
    _check_beta(beta)
    i1, i2 = g.face_index(f1), g.face_index(f2)
    delta = np.zeros(g.num_faces)
    delta[i1] += 1.0
    delta[i2] -= 1.0
    delta = Form.rooted(g, 2, delta)
    if i1 == i2 or not np.any(delta.values):
        return exact_report(1.0, cfg, {"bound_shape": 1.0})
    potential = solve_poisson(delta).values
    green_norm = -float(delta.values @ potential)
    m_beta = error_function_M(beta)
    fn = _CosineOfCharges(g, potential)
    results = run_chains(_observable_chain, cfg, g, beta, cfg, fn)
    extras = {"bound_shape": math.exp(-0.5 * m_beta / (2 * TWO_PI_SQ * beta) * green_norm),
              "green_norm": green_norm, "M": m_beta}
    return make_report(results, cfg, extras)


class _CosineOfCharges:
    """cos(2π⟨q, u⟩)，q = dm"""

    def __init__(self, g: LatticeGeometry, potential: np.ndarray):
        self.g = g
        self.potential = potential

    def __call__(self, thetas: np.ndarray, ms: np.ndarray) -> np.ndarray:
        return np.cos(TWO_PI * (charges_from_m(self.g, ms) @ self.potential))


# ----------------------------------------------------------------------
# Villain 模型
# ----------------------------------------------------------------------
@dataclass
class TwoPointReport:
    """
    两点函数的两种估计

    Args:
        direct: E[cos(θ(v1) - θ(v2))] 的直接估计
        vortex: 涡旋因子 E[cos 2π(d*Δ^{-1}m(v1) - d*Δ^{-1}m(v2))]
        gff_factor: 精确的 GFF 因子
        factorized: gff_factor × vortex
        factorized_stderr: gff_factor × vortex 标准误差
        improved_shape: gff_factor^{1+M(β)/2}
    """
    direct: EstimateReport
    vortex: EstimateReport
    gff_factor: float
    factorized: float
    factorized_stderr: float
    improved_shape: float

    def agreement_z(self) -> float:
        """直接估计与分解估计之差的合并 z 值"""
        combined = math.hypot(self.direct.stderr, self.factorized_stderr)
        if combined == 0:
            return 0.0 if self.direct.value == self.factorized else math.inf
        return abs(self.direct.value - self.factorized) / combined

    def to_dict(self) -> Dict:
        return asdict(self)


class _TwoPointObservable:
    def __init__(self, v1: int, v2: int, winding: Optional[np.ndarray]):
        self.v1 = v1
        self.v2 = v2
        self.winding = winding

    def __call__(self, thetas: np.ndarray, ms: np.ndarray) -> np.ndarray:
        direct = np.cos(thetas[:, self.v1] - thetas[:, self.v2])
        vortex = np.cos(TWO_PI * (ms @ self.winding))
        return np.stack([direct, vortex], axis=1)


def _two_point_chain(rng, g, beta, cfg, fn):
    return np.concatenate([fn(thetas, sample_m_batch(g, thetas, beta, rng))
                           for thetas in villain_theta_blocks(g, beta, cfg, rng)], axis=0)


def villain_two_point(g: LatticeGeometry, v1: Label, v2: Label, beta: float,
                      cfg: ChainConfig) -> TwoPointReport:
    """
    E^Vil[cos(θ(v1) - θ(v2))]：直接估计，以及 GFF 因子乘涡旋因子的分解估计

    GFF 因子为 exp(-(G(v1,v1) + G(v2,v2) - 2G(v1,v2))/(2β))；
    d*Δ^{-1}m 在 v1、v2 处之差等于 -⟨m, Δ^{-1}dδ⟩，δ = 1_{v1} - 1_{v2}。
    """
    _check_beta(beta)
    i1, i2 = g.vertex_index(v1), g.vertex_index(v2)
    m_beta = error_function_M(beta)
    if i1 == i2:
        one = exact_report(1.0, cfg)
        return TwoPointReport(one, one, 1.0, 1.0, 0.0, 1.0)
    spread = (green(g, 0, i1, i1) + green(g, 0, i2, i2) - 2.0 * green(g, 0, i1, i2))
    gff_factor = math.exp(-spread / (2.0 * beta))
    delta = np.zeros(g.num_vertices)
    delta[i1] += 1.0
    delta[i2] -= 1.0
    delta[g.root_vertex] = 0.0
    winding = -get_solver(g, 1).solve(d_matrix(g, 0) @ delta)
    results = run_chains(_two_point_chain, cfg, g, beta, cfg, _TwoPointObservable(i1, i2, winding))
    direct = make_report([r[:, 0] for r in results], cfg, {"gff_factor": gff_factor})
    vortex = make_report([r[:, 1] for r in results], cfg)
    report = TwoPointReport(direct=direct, vortex=vortex, gff_factor=gff_factor,
                            factorized=gff_factor * vortex.value,
                            factorized_stderr=gff_factor * vortex.stderr,
                            improved_shape=gff_factor ** (1.0 + m_beta / 2.0))
    logger.info("两点函数: 直接 %.5f ± %.2g，分解 %.5f ± %.2g，GFF 因子 %.5f",
                direct.value, direct.stderr, report.factorized, report.factorized_stderr, gff_factor)
    return report


class _EdgeVariance:
    def __init__(self, g: LatticeGeometry, edge: int, beta: float):
        tail, head = g.edges[edge]
        self.tail, self.head = int(tail), int(head)
        self.beta = beta

    def __call__(self, thetas: np.ndarray) -> np.ndarray:
        grads = thetas[:, self.head] - thetas[:, self.tail]
        big = TWO_PI_SQ * self.beta
        return big * ig_variance(-grads / TWO_PI, big)


def tilde_M_estimator(g: LatticeGeometry, edge: int, beta: float, cfg: ChainConfig) -> EstimateReport:
    """
    M̃(β, e) = (2π)²β·E^Vil[Var^IG(-dθ(e)/2π, (2π)²β)]

    extras 给出 M(β) 与 a = 0 处的值 (2π)²β·Var^IG(0, (2π)²β)。
    """
    _check_beta(beta)
    if not 0 <= edge < g.num_edges:
        raise InvalidParameterError(f"边编号越界: {edge}")
    results = run_chains(_theta_chain, cfg, g, beta, cfg, _EdgeVariance(g, edge, beta))
    return make_report(results, cfg, {"M": error_function_M(beta), "M_at_zero": M_upper_proxy(beta)})


class _WindowIndicator:
    def __init__(self, g: LatticeGeometry, edges: np.ndarray, eps: float):
        self.tails = g.edges[edges, 0]
        self.heads = g.edges[edges, 1]
        self.eps = eps

    def __call__(self, thetas: np.ndarray) -> np.ndarray:
        grads = thetas[:, self.heads] - thetas[:, self.tails]
        wrapped = np.mod(grads + np.pi, TWO_PI) - np.pi
        return np.all(np.abs(wrapped) < self.eps, axis=1).astype(float)


def gradient_window_probability(g: LatticeGeometry, radius: int, eps: float, beta: float,
                                cfg: ChainConfig, center: Sequence[int] = (0, 0),
                                edges: Optional[Sequence[int]] = None) -> EstimateReport:
    """
    P(窗口内所有边的 dθ mod 2π 落在 (-ε, ε))

    Args:
        radius: 窗口 center + [-radius, radius]^2
        edges: 直接给出边集时忽略 radius/center
    """
    _check_beta(beta)
    if not eps > 0:
        raise InvalidParameterError("ε 必须为正")
    chosen = np.asarray(edges, dtype=np.int64) if edges is not None else window_edges(g, center, radius)
    if len(chosen) == 0:
        raise InvalidParameterError("窗口内没有边")
    results = run_chains(_theta_chain, cfg, g, beta, cfg, _WindowIndicator(g, chosen, eps))
    return make_report(results, cfg, {"edges": int(len(chosen)), "eps": eps})


def decoupling_statistics(g: LatticeGeometry, beta: float, cfg: ChainConfig) -> Dict:
    """
    对平衡 Villain 耦合样本做正变换，检验 φ 的协方差等于 G/β、φ 与 q 不相关

    Returns:
        包含 cov_max_z、corr_max_z 以及样本数的字典（z 值按逐项标准误差计算）
    """
    _check_beta(beta)
    results = run_chains(_decoupled_chain, cfg, g, beta, cfg)
    phis = np.concatenate([r[0] for r in results])
    qs = np.concatenate([r[1] for r in results]).astype(float)
    n = len(phis)
    vfree = g.free_cells(0)
    ffree = g.free_cells(2)
    phis = phis[:, vfree]
    qs = qs[:, ffree]
    target = green_matrix(g, 0)[np.ix_(vfree, vfree)] / beta
    centred = phis - phis.mean(axis=0)
    cov = centred.T @ centred / n
    second = (centred ** 2).T @ (centred ** 2) / n
    cov_se = np.sqrt(np.maximum(second - cov ** 2, 0.0) / n)
    cov_z = np.abs(cov - target) / np.maximum(cov_se, 1e-300)
    qc = qs - qs.mean(axis=0)
    cross = centred.T @ qc / n
    denom = np.outer(centred.std(axis=0), qc.std(axis=0))
    usable = denom > 0
    corr = np.where(usable, cross / np.where(usable, denom, 1.0), 0.0)
    corr_z = np.abs(corr) * math.sqrt(n)
    return {"n_samples": n, "cov_max_z": float(cov_z.max()), "corr_max_z": float(corr_z.max()),
            "cov": cov, "target": target, "corr": corr}


def _decoupled_chain(rng, g, beta, cfg):
    phis, qs = [], []
    for thetas in villain_theta_blocks(g, beta, cfg, rng):
        ms = sample_m_batch(g, thetas, beta, rng)
        phi, q = decouple_batch(g, thetas, ms)
        phis.append(phi)
        qs.append(q)
    return np.concatenate(phis), np.concatenate(qs)


# ----------------------------------------------------------------------
# 整数值 GFF
# ----------------------------------------------------------------------
class _Projection:
    def __init__(self, weights: np.ndarray):
        self.weights = weights

    def __call__(self, psis: np.ndarray) -> np.ndarray:
        return psis @ self.weights


def variance_identity_check(g: LatticeGeometry, weights, beta: float, cfg: ChainConfig) -> Dict:
    """
    (2π)²β²·Var^Coul_β[⟨Δ^{-1}q, w⟩] + Var^IV_{1/β}[⟨Ψ, w⟩] = Var^GFF_{1/β}[⟨φ, w⟩] = β⟨w, (-Δ)^{-1}w⟩

    Ψ 与 w 都在 g 的面上；IV-GFF 在对偶几何的顶点上采样。同时报告
    Var^IV ≤ (1 - M(β))·Var^GFF。

    Returns:
        包含左右两边、合并标准误差、z 值与界检查的字典
    """
    _check_beta(beta)
    w = _face_form(g, weights)
    coulomb = coulomb_potential_variance(g, w, beta, cfg)
    gff_var = beta * coulomb.extras["green_norm"]
    dual = dual_geometry(g)
    iv_chains = run_chains(_ivgff_chain, cfg, dual, 1.0 / beta, cfg, _Projection(w.values))
    iv = make_variance_report(iv_chains, cfg)
    scale = TWO_PI_SQ * beta ** 2
    lhs = scale * coulomb.value + iv.value
    lhs_se = math.hypot(scale * coulomb.stderr, iv.stderr)
    m_beta = error_function_M(beta)
    return {
        "coulomb_var": coulomb.value, "coulomb_stderr": coulomb.stderr,
        "iv_var": iv.value, "iv_stderr": iv.stderr,
        "gff_var": gff_var, "lhs": lhs, "lhs_stderr": lhs_se,
        "z": (lhs - gff_var) / lhs_se if lhs_se > 0 else 0.0,
        "iv_bound": (1.0 - m_beta) * gff_var,
        "iv_bound_z": (iv.value - (1.0 - m_beta) * gff_var) / iv.stderr if iv.stderr > 0 else 0.0,
    }


class _SiteExponential:
    def __init__(self, vertex: int, lam: float):
        self.vertex = vertex
        self.lam = lam

    def __call__(self, psis: np.ndarray) -> np.ndarray:
        return np.exp(self.lam * psis[:, self.vertex])


def ivgff_laplace_transform(g: LatticeGeometry, vertex: Label, lam: float, beta: float,
                            cfg: ChainConfig) -> EstimateReport:
    """
    E^IV_{1/β}[e^{λΨ(v)}]，extras 给出 GFF 值 e^{λ²βG(v,v)/2}
    与改进形状 e^{λ²βG(v,v)(1-M(β))/2}
    """
    _check_beta(beta)
    v = g.vertex_index(vertex)
    gvv = green(g, 0, v, v)
    m_beta = error_function_M(beta)
    results = run_chains(_ivgff_chain, cfg, g, 1.0 / beta, cfg, _SiteExponential(v, lam))
    extras = {"gff": math.exp(0.5 * lam * lam * beta * gvv),
              "improved_shape": math.exp(0.5 * lam * lam * beta * gvv * (1.0 - m_beta)),
              "green_vv": gvv, "M": m_beta}
    return make_report(results, cfg, extras)


def max_threshold(n: int, beta: float) -> float:
    """√((1 - M(β)/2)·2β/π)·log n"""
    return math.sqrt((1.0 - error_function_M(beta) / 2.0) * 2.0 * beta / math.pi) * math.log(n)


def site_threshold(n: int, beta: float, alpha: float) -> float:
    """α·√(β̂/(2π))·log n，β̂ = (1 - M(β))β"""
    beta_hat = (1.0 - error_function_M(beta)) * beta
    return alpha * math.sqrt(beta_hat / TWO_PI) * math.log(n)


class _MaxAndTails:
    def __init__(self, bulk: np.ndarray, thresholds: np.ndarray):
        self.bulk = bulk
        self.thresholds = thresholds

    def __call__(self, psis: np.ndarray) -> np.ndarray:
        maxima = psis.max(axis=1).astype(float)
        bulk = psis[:, self.bulk]
        tails = [(bulk >= t).mean(axis=1) for t in self.thresholds]
        return np.column_stack([maxima] + tails)


def ivgff_run(n: int, beta: float, alphas: Sequence[float], cfg: ChainConfig) -> np.ndarray:
    g = build_lattice(n, BoundaryCondition.ZERO)
    coords = np.nan_to_num(g.vertex_coords, nan=np.inf)
    bulk = np.flatnonzero(np.all(np.abs(coords) <= n / 2, axis=1))
    thresholds = np.array([site_threshold(n, beta, a) for a in alphas])
    results = run_chains(_ivgff_chain, cfg, g, 1.0 / beta, cfg, _MaxAndTails(bulk, thresholds))
    return np.concatenate(results, axis=0)


def ivgff_max_statistics(n_list: Sequence[int], beta: float, cfg: ChainConfig,
                         alphas: Sequence[float] = (1.5, 2.0),
                         runs: Optional[Dict[int, np.ndarray]] = None) -> pd.DataFrame:
    """
    Zero 边界、温度 β 的 IV-GFF 最大值统计

    Args:
        runs: 预先计算的 {n: 观测数组}，用于与 ivgff_tail_fit 共享同一批样本

    Returns:
        每个 n 一行：样本数、阈值、超过阈值的频率及其标准误差、最大值的均值与标准差
    """
    _check_beta(beta)
    rows = []
    for n in n_list:
        data = runs[n] if runs is not None and n in runs else ivgff_run(n, beta, alphas, cfg)
        maxima = data[:, 0]
        threshold = max_threshold(n, beta)
        exceed = (maxima > threshold).astype(float)
        freq = float(exceed.mean())
        rows.append({"n": n, "samples": len(maxima), "threshold": threshold,
                     "exceed_freq": freq,
                     "exceed_stderr": math.sqrt(max(freq * (1 - freq), 1e-300) / len(maxima)),
                     "max_mean": float(maxima.mean()), "max_std": float(maxima.std(ddof=1)),
                     "max_min": float(maxima.min())})
        logger.info("n=%d: 最大值均值 %.3f，超过阈值 %.3f 的频率 %.3f", n, maxima.mean(), threshold, freq)
    return pd.DataFrame(rows)


def ivgff_tail_fit(n_list: Sequence[int], beta: float, cfg: ChainConfig,
                   alphas: Sequence[float] = (1.5, 2.0),
                   runs: Optional[Dict[int, np.ndarray]] = None) -> pd.DataFrame:
    """
    单点尾概率 P_n = P(Ψ(v) ≥ α√(β̂/2π)·log n) 对 log n 的 OLS 拟合

    常数自由：只比较斜率与 -α²/2，斜率不超过 -α²/2 + 2·标准误差视为相容。
    频率为 0 的 n 不参与拟合。
    """
    _check_beta(beta)
    data = {n: (runs[n] if runs is not None and n in runs else ivgff_run(n, beta, alphas, cfg))
            for n in n_list}
    rows = []
    for j, alpha in enumerate(alphas):
        ns = np.array(list(n_list), dtype=float)
        probs = np.array([data[n][:, 1 + j].mean() for n in n_list])
        keep = probs > 0
        row = {"alpha": alpha, "target_slope": -alpha ** 2 / 2.0,
               "probs": probs.tolist(), "n": ns.tolist()}
        if keep.sum() >= 3:
            model = sm.OLS(np.log(probs[keep]), sm.add_constant(np.log(ns[keep]))).fit()
            slope, se = float(model.params[1]), float(model.bse[1])
            row.update(slope=slope, slope_stderr=se,
                       constants=(probs * ns ** (alpha ** 2 / 2.0)).tolist(),
                       compatible=bool(slope <= -alpha ** 2 / 2.0 + 2.0 * se))
        elif keep.sum() == 2:
            x, y = np.log(ns[keep]), np.log(probs[keep])
            slope = float((y[1] - y[0]) / (x[1] - x[0]))
            row.update(slope=slope, slope_stderr=float("nan"),
                       constants=(probs * ns ** (alpha ** 2 / 2.0)).tolist(),
                       compatible=bool(slope <= -alpha ** 2 / 2.0))
        else:
            row.update(slope=float("nan"), slope_stderr=float("nan"),
                       constants=(probs * ns ** (alpha ** 2 / 2.0)).tolist(), compatible=None)
        rows.append(row)
    return pd.DataFrame(rows)


# ----------------------------------------------------------------------
# 采样器基准
# ----------------------------------------------------------------------
def _local_bench_chain(rng, g, beta, cfg, potential):
    start = time.perf_counter()
    series = np.concatenate([q @ potential for q in coulomb_local_blocks(g, beta, cfg, rng)])
    return series, time.perf_counter() - start


def _metropolis_bench_chain(rng, g, beta, cfg, potential):
    start = time.perf_counter()
    series = np.concatenate([q @ potential for q in metropolis_blocks(g, beta, cfg, rng)])
    return series, time.perf_counter() - start


def sampler_benchmark(g: LatticeGeometry, beta: float, cfg: ChainConfig,
                      weights=None) -> pd.DataFrame:
    """
    局部采样器与非局部 Metropolis 在 ⟨Δ^{-1}q, w⟩ 上的比较

    w 默认为离中心最近的内部面的示性形式。每行给出均值、批均值标准误差、
    τ_int 及其误差、墙钟时间、每个有效样本的时间与每次单点更新的时间。
    """
    _check_beta(beta)
    if weights is None:
        centre = np.nanmean(np.where(np.isfinite(g.face_centers), g.face_centers, np.nan), axis=0)
        dist = np.linalg.norm(np.nan_to_num(g.face_centers - centre, nan=1e9, posinf=1e9, neginf=1e9), axis=1)
        dist[g.root_face] = np.inf
        weights = np.zeros(g.num_faces)
        weights[int(np.argmin(dist))] = 1.0
    w = _face_form(g, weights)
    potential = solve_poisson(w).values
    rows = []
    sites = {"local": len(g.free_cells(0)), "metropolis": len(g.free_cells(2))}
    for name, worker in (("local", _local_bench_chain), ("metropolis", _metropolis_bench_chain)):
        results = run_chains(worker, cfg, g, beta, cfg, potential)
        report = make_report([r[0] for r in results], cfg)
        seconds = float(sum(r[1] for r in results))
        sweeps = (cfg.burn_in_for(g) + cfg.sweeps) * cfg.chains
        ess = report.n_samples / max(report.tau_int, 1e-12)
        rows.append({"sampler": name, "n": g.n, "beta": beta, "mean": report.value,
                     "stderr": report.stderr, "tau_int": report.tau_int,
                     "tau_stderr": tau_stderr(report.tau_int, report.n_samples),
                     "n_samples": report.n_samples, "seconds": seconds,
                     "seconds_per_ess": seconds / max(ess, 1e-12),
                     "seconds_per_site_update": seconds / max(sweeps * sites[name], 1)})
        logger.info("%s: τ_int=%.2f，耗时 %.2fs", name, report.tau_int, seconds)
    return pd.DataFrame(rows)
