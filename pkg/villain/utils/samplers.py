"""
采样器模块

- GFF：精确高斯抽样（小规模稠密 Cholesky，大规模白噪声表示）
- Villain 模型：顺序热浴（numba 内核），m | θ 逐边独立的整数高斯
- 库仑气体：局部算法（Villain 链 → m | θ → q = dm）与非局部 Metropolis 基线
- 整数值 GFF：顺序热浴

每条链独占自己的状态与随机数生成器；几何与分解只读共享。
"""
import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy import special

from . import kernels
from .calculus import (Form, d, d_matrix, dstar, get_solver, green_matrix,
                       solve_poisson)
from .errors import DegreeError, InvalidParameterError
from .ig_dist import TWO_PI, TWO_PI_SQ, ig_pmf, ig_sample_array
from .lattice import LatticeGeometry

logger = logging.getLogger(__name__)


@dataclass
class ChainConfig:
    """
    马尔可夫链参数

    Args:
        seed: 主种子，完全决定输出
        sweeps: 烧入后的扫描次数
        burn_in: 烧入扫描次数，None 时取启发式 100·n
        thinning: 每隔多少次扫描记录一次
        chains: 独立链条数（种子由主种子派生）
        block: 每次调用内核的扫描数；纯 θ 链与 IV-GFF 链的结果与它无关，
            逐块交替抽 m 的链随它变化，但仍由配置完全决定
        workers: 并行进程数
    """
    seed: int = 0
    sweeps: int = 1000
    burn_in: Optional[int] = None
    thinning: int = 1
    chains: int = 1
    block: int = 256
    workers: int = 1

    def __post_init__(self):
        if self.sweeps < 1 or self.thinning < 1 or self.chains < 1 or self.block < 1:
            raise InvalidParameterError(f"链参数不合法: {self}")
        if self.burn_in is not None and self.burn_in < 0:
            raise InvalidParameterError("burn_in 不能为负")

    def burn_in_for(self, g: LatticeGeometry) -> int:
        """烧入扫描数（启发式，不对应任何严格混合时间界）"""
        if self.burn_in is not None:
            return self.burn_in
        return 100 * max(g.n, 1)

    @property
    def n_records(self) -> int:
        return self.sweeps // self.thinning

    def to_dict(self) -> Dict:
        return asdict(self)

    def config_hash(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class VillainState:
    """Villain 耦合 (θ, m)：θ 为 [0, 2π) 中的 0-形式，m 为整数 1-形式"""
    theta: Form
    m: Form

    def __post_init__(self):
        if self.theta.degree != 0 or self.m.degree != 1:
            raise InvalidParameterError("VillainState 需要 0-形式 θ 与 1-形式 m")
        if self.theta.geometry is not self.m.geometry:
            raise InvalidParameterError("θ 与 m 的几何不一致")
        if not self.m.is_integer:
            raise InvalidParameterError("m 必须为整数 1-形式")

    @property
    def geometry(self) -> LatticeGeometry:
        return self.theta.geometry


@dataclass
class CoulombState:
    """整数电荷 q（在根胞腔处为 0）"""
    q: Form


@dataclass
class IVState:
    """整数值 GFF 高度 Ψ（在根胞腔处为 0）"""
    psi: Form


def spawn_rngs(seed: int, count: int) -> List[np.random.Generator]:
    """由主种子派生 count 个相互独立的生成器"""
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(count)]


def _check_beta(beta: float) -> None:
    if not beta > 0 or not math.isfinite(beta):
        raise InvalidParameterError(f"β 必须为正数，收到 {beta}")


# ----------------------------------------------------------------------
# GFF
# ----------------------------------------------------------------------
def gff_sample(g: LatticeGeometry, degree: int, beta: float,
               rng: np.random.Generator) -> Form:
    """
    协方差为 G/β 的精确 GFF 样本（无 MCMC）

    小规模用 -Δ 的 Cholesky 因子；规模超出稠密上限时改用白噪声表示，同样精确。
    """
    _check_beta(beta)
    if degree not in (0, 2):
        raise InvalidParameterError("GFF 只在 0-形式或 2-形式上定义")
    solver = get_solver(g, degree)
    if solver.method in ("cholesky", "empty"):
        z = rng.standard_normal(len(solver.free))
        return Form(degree, solver.sample_gaussian(z) / math.sqrt(beta), g)
    noise = Form(1, rng.standard_normal(g.num_edges) / math.sqrt(beta), g)
    source = dstar(noise) if degree == 0 else d(noise)
    return solve_poisson(source)


def white_noise_decomposition(noise: Form) -> Tuple[Form, Form]:
    """给定边上的 1-形式 W，返回 (Δ^{-1} d* W, Δ^{-1} d W)"""
    if noise.degree != 1:
        raise InvalidParameterError("白噪声必须是 1-形式")
    return solve_poisson(dstar(noise)), solve_poisson(d(noise))


def gff_from_white_noise(g: LatticeGeometry, beta: float,
                         rng: np.random.Generator) -> Tuple[Form, Form]:
    """
    边上独立 N(0, 1/β) 白噪声 W 的分解：φ = Δ^{-1}d*W（顶点上的 GFF），
    φ̃ = Δ^{-1}dW（面上的 GFF），两者独立
    """
    _check_beta(beta)
    noise = Form(1, rng.standard_normal(g.num_edges) / math.sqrt(beta), g)
    return white_noise_decomposition(noise)


# ----------------------------------------------------------------------
# Villain 模型
# ----------------------------------------------------------------------
def _update_sites(g: LatticeGeometry, degree_limit: Optional[int]) -> np.ndarray:
    sites = np.array([v for v in range(g.num_vertices) if v != g.root_vertex], dtype=np.int64)
    if degree_limit is not None and len(sites):
        degrees = g.degrees[sites]
        worst = int(np.argmax(degrees))
        if degrees[worst] > degree_limit:
            raise DegreeError(int(sites[worst]), int(degrees[worst]), degree_limit)
    return sites


def _villain_block(g: LatticeGeometry, theta: np.ndarray, beta: float, rng: np.random.Generator,
                   n_sweeps: int, record_every: int) -> np.ndarray:
    sites = _update_sites(g, kernels.MAX_DEGREE)
    indptr, nbrs, _ = g.neighbor_csr
    # 每次扫描的随机数按行连续抽取，分块大小不改变随机数流
    draws = rng.standard_normal((n_sweeps, 2, len(sites)))
    uniforms = special.ndtr(draws[:, 0])
    normals = np.ascontiguousarray(draws[:, 1])
    rows = n_sweeps // record_every if record_every > 0 else 0
    out = np.empty((rows, g.num_vertices))
    kernels.villain_sweeps(theta, indptr, nbrs, sites, float(beta), uniforms, normals,
                           record_every, out)
    return out


def villain_heat_bath_sweep(state: VillainState, beta: float,
                            rng: np.random.Generator) -> VillainState:
    """
    对 θ 做一次顺序（字典序）热浴扫描，v0 不更新；m 保持不变，
    需要联合样本时再调用 sample_m_given_theta
    """
    _check_beta(beta)
    g = state.geometry
    theta = state.theta.values.astype(float).copy()
    _villain_block(g, theta, beta, rng, 1, 0)
    return VillainState(Form(0, theta, g), state.m)


def villain_energy_trace(g: LatticeGeometry, thetas: np.ndarray) -> np.ndarray:
    """每条记录的 Σ_e (1 - cos dθ(e))，用于监测收敛"""
    grads = (d_matrix(g, 0) @ thetas.T).T
    return (1.0 - np.cos(grads)).sum(axis=1)


def villain_theta_blocks(g: LatticeGeometry, beta: float, cfg: ChainConfig,
                         rng: np.random.Generator,
                         theta0: Optional[np.ndarray] = None) -> Iterator[np.ndarray]:
    """
    烧入后按块产出 θ 记录，形状 (记录数, |V|)，共 cfg.n_records 行
    """
    _check_beta(beta)
    theta = np.zeros(g.num_vertices) if theta0 is None else np.array(theta0, dtype=float)
    theta[g.root_vertex] = 0.0
    burn = cfg.burn_in_for(g)
    done = 0
    while done < burn:
        step = min(cfg.block, burn - done)
        _villain_block(g, theta, beta, rng, step, 0)
        done += step
    if burn:
        logger.debug("Villain 链烧入完成：%d 次扫描，能量 %.4f", burn,
                     float(villain_energy_trace(g, theta[None, :])[0]))
    per_block = max(cfg.block // cfg.thinning, 1) * cfg.thinning
    remaining = cfg.n_records * cfg.thinning
    while remaining > 0:
        step = min(per_block, remaining)
        yield _villain_block(g, theta, beta, rng, step, cfg.thinning)
        remaining -= step


def sample_m_batch(g: LatticeGeometry, thetas: np.ndarray, beta: float,
                   rng: np.random.Generator) -> np.ndarray:
    """对一批 θ 记录逐边独立抽 m(e) ~ N^IG(-dθ(e)/2π, (2π)^2 β)"""
    grads = (d_matrix(g, 0) @ np.atleast_2d(thetas).T).T
    return ig_sample_array(-grads / TWO_PI, TWO_PI_SQ * beta, rng)


def sample_m_given_theta(theta: Form, beta: float, rng: np.random.Generator) -> Form:
    """m | θ：各边独立的整数高斯"""
    _check_beta(beta)
    if theta.degree != 0:
        raise InvalidParameterError("θ 必须是 0-形式")
    m = sample_m_batch(theta.geometry, theta.values[None, :], beta, rng)[0]
    return Form(1, m, theta.geometry)


def villain_coupling_blocks(g: LatticeGeometry, beta: float, cfg: ChainConfig,
                            rng: np.random.Generator) -> Iterator[Tuple[np.ndarray, np.ndarray]]:
    """按块产出 Villain 耦合样本 (θ, m)"""
    for thetas in villain_theta_blocks(g, beta, cfg, rng):
        yield thetas, sample_m_batch(g, thetas, beta, rng)


def charges_from_m(g: LatticeGeometry, ms: np.ndarray) -> np.ndarray:
    """q = dm（整数运算，f0 分量为 0）"""
    return np.asarray((d_matrix(g, 1) @ np.atleast_2d(ms).T).T, dtype=np.int64)


def coulomb_local_blocks(g: LatticeGeometry, beta: float, cfg: ChainConfig,
                         rng: np.random.Generator) -> Iterator[np.ndarray]:
    """局部库仑采样：Villain 热浴 → m | θ → q = dm，按块产出 q"""
    for _, ms in villain_coupling_blocks(g, beta, cfg, rng):
        yield charges_from_m(g, ms)


def coulomb_sample_local(g: LatticeGeometry, beta: float, cfg: ChainConfig,
                         rng: np.random.Generator) -> np.ndarray:
    """
    局部算法抽取库仑气体样本

    Villain 模型在 g 的顶点上，电荷 q 在 g 的面上（即对偶几何的顶点，边界条件对偶）。

    Returns:
        形状 (cfg.n_records, |F|) 的整数数组，每行是一个 CoulombState 的取值
    """
    blocks = list(coulomb_local_blocks(g, beta, cfg, rng))
    return np.concatenate(blocks, axis=0)


# ----------------------------------------------------------------------
# 整数值 GFF
# ----------------------------------------------------------------------
def _ivgff_block(g: LatticeGeometry, psi: np.ndarray, inv_temp: float, rng: np.random.Generator,
                 n_sweeps: int, record_every: int) -> np.ndarray:
    sites = _update_sites(g, None)
    indptr, nbrs, _ = g.neighbor_csr
    uniforms = rng.random((n_sweeps, len(sites)))
    rows = n_sweeps // record_every if record_every > 0 else 0
    out = np.empty((rows, g.num_vertices), dtype=np.int64)
    kernels.ivgff_sweeps(psi, indptr, nbrs, sites, float(inv_temp), uniforms, record_every, out)
    return out


def ivgff_heat_bath_sweep(state: IVState, inv_temp: float,
                          rng: np.random.Generator) -> IVState:
    """
    顶点上整数值 GFF（逆温度 inv_temp）的一次顺序热浴扫描：
    Ψ(x) | 邻居 ~ N^IG(邻居平均, deg(x)·inv_temp)
    面上的模型请传入对偶几何上的 0-形式
    """
    _check_beta(inv_temp)
    if state.psi.degree != 0:
        raise InvalidParameterError("热浴作用在 0-形式上；面上的模型请使用对偶几何")
    g = state.psi.geometry
    psi = state.psi.values.astype(np.int64).copy()
    _ivgff_block(g, psi, inv_temp, rng, 1, 0)
    return IVState(Form(0, psi, g))


def ivgff_blocks(g: LatticeGeometry, inv_temp: float, cfg: ChainConfig,
                 rng: np.random.Generator,
                 psi0: Optional[np.ndarray] = None) -> Iterator[np.ndarray]:
    """烧入后按块产出 Ψ 记录，形状 (记录数, |V|)"""
    _check_beta(inv_temp)
    psi = np.zeros(g.num_vertices, dtype=np.int64) if psi0 is None else np.array(psi0, dtype=np.int64)
    psi[g.root_vertex] = 0
    burn = cfg.burn_in_for(g)
    done = 0
    while done < burn:
        step = min(cfg.block, burn - done)
        _ivgff_block(g, psi, inv_temp, rng, step, 0)
        done += step
    per_block = max(cfg.block // cfg.thinning, 1) * cfg.thinning
    remaining = cfg.n_records * cfg.thinning
    while remaining > 0:
        step = min(per_block, remaining)
        yield _ivgff_block(g, psi, inv_temp, rng, step, cfg.thinning)
        remaining -= step


def ivgff_site_transition(g: LatticeGeometry, psi: np.ndarray, x: int, inv_temp: float,
                          values: np.ndarray) -> np.ndarray:
    """单点热浴从当前构型出发把 Ψ(x) 变为 values 中各值的概率"""
    indptr, nbrs, _ = g.neighbor_csr
    neighbours = psi[nbrs[indptr[x]:indptr[x + 1]]]
    deg = len(neighbours)
    return ig_pmf(float(neighbours.mean()), deg * inv_temp, np.asarray(values))


# ----------------------------------------------------------------------
# 非局部 Metropolis 基线
# ----------------------------------------------------------------------
@dataclass
class MetropolisRun:
    q: np.ndarray
    acceptance: float
    tracked_energy: float
    recomputed_energy: float
    moves: int


def coulomb_energy(q: np.ndarray, green: np.ndarray) -> float:
    """½⟨q, (-Δ)^{-1} q⟩"""
    q = np.asarray(q, dtype=float)
    return 0.5 * float(q @ green @ q)


def metropolis_blocks(g: LatticeGeometry, beta: float, cfg: ChainConfig,
                      rng: np.random.Generator, degree: int = 2,
                      stats: Optional[Dict] = None) -> Iterator[np.ndarray]:
    """
    单点 ±1 Metropolis，维护势 u = G q；按块产出 q 记录

    Args:
        stats: 若给出，结束时写入 accepted / moves / tracked_energy / q_final
    """
    _check_beta(beta)
    green = green_matrix(g, degree)
    sites = g.free_cells(degree).astype(np.int64)
    q = np.zeros(g.num_cells(degree), dtype=np.int64)
    potential = np.zeros(g.num_cells(degree))
    coupling = TWO_PI_SQ * beta
    energy = 0.0
    accepted = 0
    moves = 0

    def run(n_sweeps: int, record_every: int) -> np.ndarray:
        nonlocal energy, accepted, moves
        draws = rng.random((n_sweeps, 2, len(sites)))
        sign_u = np.ascontiguousarray(draws[:, 0])
        accept_u = np.ascontiguousarray(draws[:, 1])
        rows = n_sweeps // record_every if record_every > 0 else 0
        out = np.empty((rows, len(q)), dtype=np.int64)
        _, acc, energy = kernels.metropolis_sweeps(
            q, potential, green, sites, coupling, sign_u, accept_u, record_every, out, energy)
        accepted += acc
        moves += n_sweeps * len(sites)
        return out

    burn = cfg.burn_in_for(g)
    done = 0
    while done < burn:
        step = min(cfg.block, burn - done)
        run(step, 0)
        done += step
    per_block = max(cfg.block // cfg.thinning, 1) * cfg.thinning
    remaining = cfg.n_records * cfg.thinning
    while remaining > 0:
        step = min(per_block, remaining)
        yield run(step, cfg.thinning)
        remaining -= step
    if stats is not None:
        stats.update(accepted=accepted, moves=moves, tracked_energy=energy, q_final=q.copy())


def coulomb_metropolis_baseline(g: LatticeGeometry, beta: float, cfg: ChainConfig,
                                rng: np.random.Generator, degree: int = 2) -> MetropolisRun:
    """
    非局部 Metropolis 基线抽取库仑气体样本（需要稠密 Green 矩阵）

    Returns:
        MetropolisRun，含样本、接受率以及增量维护与重新计算的能量
    """
    stats: Dict = {}
    samples = np.concatenate(list(metropolis_blocks(g, beta, cfg, rng, degree, stats)), axis=0)
    green = green_matrix(g, degree)
    recomputed = coulomb_energy(stats["q_final"], green)
    moves = max(stats["moves"], 1)
    return MetropolisRun(q=samples, acceptance=stats["accepted"] / moves,
                         tracked_energy=stats["tracked_energy"],
                         recomputed_energy=recomputed, moves=stats["moves"])


def metropolis_site_transition(q: np.ndarray, f: int, green: np.ndarray,
                               beta: float) -> Dict[int, float]:
    """
    单个面 f 上一次 Metropolis 移动的转移概率

    Returns:
        {增量: 概率}，增量取 -1、0、+1
    """
    u = green @ np.asarray(q, dtype=float)
    out = {}
    for step in (1, -1):
        delta = step * u[f] + 0.5 * green[f, f]
        out[step] = 0.5 * min(1.0, math.exp(-TWO_PI_SQ * beta * delta))
    out[0] = 1.0 - out[1] - out[-1]
    return out
