"""
精确计算模块（小图上的真值）

- Z^GFF：log det(-Δ) 的闭式
- Z^Coul、Z^IV：整数格点在盒子 |x| ≤ K 内枚举，尾部用二次型最小特征值给出的高斯界认证
- Z^Vil：自由角（≤ 3 个）上的迭代周期梯形求积，节点数加倍直到相对变化 < 1e-9
- 配分函数恒等式、转移公式、自由能下界
"""
import logging
import math
from dataclasses import asdict, dataclass
from typing import Callable, Dict, Iterator, List, Optional, Tuple

import numpy as np
from scipy import integrate

from .calculus import (d_matrix, green_matrix, laplacian_matrix,
                       log_det_minus_laplacian)
from .errors import InvalidParameterError, SizeGuardError, TruncationError
from .ig_dist import (TWO_PI, TWO_PI_SQ, M_lower_bound, error_function_M,
                      ig_lower_bound, ig_variance, jacobi_residual)
from .lattice import LatticeGeometry, build_box

logger = logging.getLogger(__name__)

# 枚举的构型总数上限
MAX_CONFIGS = 8_000_000
# 求积允许的最多自由角
MAX_ANGLES = 3


@dataclass
class OracleConfig:
    """
    精确计算参数

    Args:
        k_max: 枚举盒半径，None 时按尾界自动选取
        rel_tol: 截断误差认证的相对上限
        quad_rel_change: 求积收敛判据（相邻两次加倍的相对变化）
        quad_min_nodes: 每个角的初始节点数
        quad_max_nodes: 每个角的最大节点数
        max_configs: 构型数上限
        iv_method: Z^IV 的计算方式 direct / poisson / auto
    """
    k_max: Optional[int] = None
    rel_tol: float = 1e-8
    quad_rel_change: float = 1e-9
    quad_min_nodes: int = 16
    quad_max_nodes: int = 512
    max_configs: int = MAX_CONFIGS
    iv_method: str = "auto"

    def __post_init__(self):
        if self.iv_method not in ("direct", "poisson", "auto"):
            raise InvalidParameterError(f"未知的 iv_method: {self.iv_method}")

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class OracleResult:
    value: float
    log_value: float
    certificate: float
    k_max: int = 0
    configs: int = 0
    method: str = "direct"

    def to_dict(self) -> Dict:
        return asdict(self)


def _check_beta(beta: float) -> None:
    if not beta > 0 or not math.isfinite(beta):
        raise InvalidParameterError(f"β 必须为正数，收到 {beta}")


def _free_block(g: LatticeGeometry, degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """返回 (自由胞腔, 自由胞腔上的 -Δ 稠密矩阵)"""
    if degree not in (0, 2):
        raise InvalidParameterError("只能在顶点或面上枚举")
    free = g.free_cells(degree)
    a = (-laplacian_matrix(g, degree)[free][:, free]).toarray()
    return free, a


# ----------------------------------------------------------------------
# 截断认证
# ----------------------------------------------------------------------
def _theta_parts(s: float, K: int) -> Tuple[float, float]:
    """θ_K(s) = Σ_{|k|≤K} e^{-sk²/2} 以及尾部 Σ_{|k|>K}"""
    reach = K + int(math.ceil(math.sqrt(100.0 / s))) + 2
    ks = np.arange(0, reach + 1, dtype=float)
    terms = np.exp(-0.5 * s * ks * ks)
    inside = terms[0] + 2.0 * terms[1:K + 1].sum()
    tail = 2.0 * terms[K + 1:].sum()
    return float(inside), float(tail)


def lattice_tail_certificate(s: float, dim: int, K: int) -> float:
    """
    Σ_{x ∈ ℤ^dim, |x|∞ > K} e^{-s|x|²/2} = θ(s)^dim - θ_K(s)^dim

    二次型 ½c⟨x, Ax⟩ ≥ ½cλ_min|x|² 时，它就是枚举截断的绝对误差上界（s = cλ_min）。
    """
    if dim == 0:
        return 0.0
    inside, tail = _theta_parts(s, K)
    return inside ** dim * math.expm1(dim * math.log1p(tail / inside))


def _guard_size(K: int, dim: int, cfg: OracleConfig) -> None:
    configs = (2 * K + 1) ** dim
    if configs > cfg.max_configs:
        raise SizeGuardError(f"枚举规模 {configs} 超过上限 {cfg.max_configs}（K={K}, 维数 {dim}）")


def choose_cutoff(s: float, dim: int, cfg: OracleConfig, margin: int = 0) -> Tuple[int, float]:
    """
    选最小的 K 使尾界 < rel_tol（被计算的和至少为 1，于是这也是相对误差界）

    搜索中每个候选 K 都先过规模检查，盒子一旦超限立即拒绝，不再继续加宽。

    Raises:
        SizeGuardError: (2K+1)^dim 超过构型上限
        TruncationError: K 超过 64 仍未满足尾界
    """
    if cfg.k_max is not None:
        K = cfg.k_max
    else:
        K = 1
        _guard_size(K + margin, dim, cfg)
        while lattice_tail_certificate(s, dim, K) >= cfg.rel_tol:
            K += 1
            _guard_size(K + margin, dim, cfg)
            if K > 64:
                raise TruncationError("枚举盒半径超过 64 仍未满足截断认证")
    K += margin
    _guard_size(K, dim, cfg)
    return K, lattice_tail_certificate(s, dim, K - margin)


def _enumerate(dim: int, K: int) -> Iterator[np.ndarray]:
    """按最外层变量分块，字典序产出 [-K, K]^dim 中的整数向量"""
    if dim == 0:
        yield np.zeros((1, 0), dtype=np.int64)
        return
    values = np.arange(-K, K + 1, dtype=np.int64)
    if dim == 1:
        yield values[:, None]
        return
    rest = np.stack(np.meshgrid(*([values] * (dim - 1)), indexing="ij"), axis=-1).reshape(-1, dim - 1)
    for v in values:
        yield np.concatenate([np.full((len(rest), 1), v, dtype=np.int64), rest], axis=1)


def _lattice_sum(quad: np.ndarray, coupling: float, K: int,
                 tilt: Optional[Callable[[np.ndarray], np.ndarray]] = None,
                 collect: bool = False):
    """
    Σ_x exp(-coupling/2 ⟨x, quad x⟩) · tilt(x)

    Returns:
        (总和, 若 collect 则为 [(构型块, 权重块)] 列表)
    """
    dim = quad.shape[0]
    total = 0.0
    pieces = []
    for block in _enumerate(dim, K):
        x = block.astype(float)
        energy = 0.5 * coupling * np.einsum("ij,jk,ik->i", x, quad, x) if dim else np.zeros(len(x))
        weights = np.exp(-energy)
        if tilt is not None:
            weights = weights * tilt(x)
        total = total + weights.sum()
        if collect:
            pieces.append((block, weights))
    return total, pieces


# ----------------------------------------------------------------------
# 配分函数
# ----------------------------------------------------------------------
def exact_Z_gff(g: LatticeGeometry, degree: int, beta: float) -> float:
    """
    log Z^GFF_β = (N/2)·log(2π/β) - ½·log det(-Δ)，N 为自由胞腔数
    """
    _check_beta(beta)
    if degree not in (0, 2):
        raise InvalidParameterError("GFF 只在 0-形式或 2-形式上定义")
    size = len(g.free_cells(degree))
    return 0.5 * size * math.log(TWO_PI / beta) - 0.5 * log_det_minus_laplacian(g, degree)


def exact_Z_coulomb(g: LatticeGeometry, beta: float, cfg: Optional[OracleConfig] = None,
                    degree: int = 2) -> OracleResult:
    """
    Z^Coul_β = Σ_q exp(-(2π)²β/2 ⟨q, (-Δ)^{-1} q⟩)，q 为自由胞腔上的整数

    Args:
        degree: 2 为面上的库仑气体（默认），0 为顶点上的
    """
    _check_beta(beta)
    cfg = cfg or OracleConfig()
    free, a = _free_block(g, degree)
    dim = len(free)
    if dim == 0:
        return OracleResult(1.0, 0.0, 0.0)
    quad = np.linalg.inv(a)
    quad = 0.5 * (quad + quad.T)
    lam = 1.0 / float(np.linalg.eigvalsh(a).max())
    K, cert = choose_cutoff(TWO_PI_SQ * beta * lam, dim, cfg)
    total, _ = _lattice_sum(quad, TWO_PI_SQ * beta, K)
    logger.debug("Z^Coul: 维数 %d, K=%d, 认证 %.2e", dim, K, cert)
    return OracleResult(float(total), math.log(total), cert, K, (2 * K + 1) ** dim, "direct")


def exact_coulomb_law(g: LatticeGeometry, beta: float, cfg: Optional[OracleConfig] = None,
                      degree: int = 2) -> Dict[Tuple[int, ...], float]:
    """
    库仑气体的精确分布

    Returns:
        {全长电荷向量（元组）: 概率}
    """
    _check_beta(beta)
    cfg = cfg or OracleConfig()
    free, a = _free_block(g, degree)
    dim = len(free)
    size = g.num_cells(degree)
    if dim == 0:
        return {tuple([0] * size): 1.0}
    quad = np.linalg.inv(a)
    quad = 0.5 * (quad + quad.T)
    lam = 1.0 / float(np.linalg.eigvalsh(a).max())
    K, _ = choose_cutoff(TWO_PI_SQ * beta * lam, dim, cfg)
    total, pieces = _lattice_sum(quad, TWO_PI_SQ * beta, K, collect=True)
    return _law_from_pieces(pieces, free, size, total)


def _law_from_pieces(pieces, free: np.ndarray, size: int, total: float) -> Dict[Tuple[int, ...], float]:
    law: Dict[Tuple[int, ...], float] = {}
    full = np.zeros(size, dtype=np.int64)
    for block, weights in pieces:
        for x, w in zip(block, weights):
            full[free] = x
            law[tuple(full.tolist())] = float(w / total)
    return law


def _iv_direct(a: np.ndarray, inv_temp: float, cfg: OracleConfig) -> Tuple[float, int, float]:
    lam = float(np.linalg.eigvalsh(a).min())
    K, cert = choose_cutoff(inv_temp * lam, a.shape[0], cfg)
    total, _ = _lattice_sum(a, inv_temp, K)
    return float(total), K, cert


def exact_Z_iv(g: LatticeGeometry, inv_temp: float, cfg: Optional[OracleConfig] = None,
               degree: int = 2) -> OracleResult:
    """
    Z^IV_t = Σ_Ψ exp(-t/2 ⟨Ψ, (-Δ)Ψ⟩)，Ψ 为自由胞腔上的整数

    method=direct 直接枚举高度；poisson 用 Poisson 求和的对偶表示
    Z^IV_t = Z^GFF_t · Σ_k exp(-(2π)²/(2t) ⟨k, (-Δ)^{-1} k⟩)；
    auto 在直接枚举超出规模时改用对偶表示。
    """
    _check_beta(inv_temp)
    cfg = cfg or OracleConfig()
    free, a = _free_block(g, degree)
    dim = len(free)
    if dim == 0:
        return OracleResult(1.0, 0.0, 0.0)
    method = cfg.iv_method
    if method in ("direct", "auto"):
        try:
            total, K, cert = _iv_direct(a, inv_temp, cfg)
            return OracleResult(total, math.log(total), cert, K, (2 * K + 1) ** dim, "direct")
        except SizeGuardError:
            if method == "direct":
                raise
            logger.info("Z^IV 直接枚举超出规模，改用 Poisson 对偶表示")
    dual = exact_Z_coulomb(g, 1.0 / inv_temp, cfg, degree)
    log_value = exact_Z_gff(g, degree, inv_temp) + dual.log_value
    return OracleResult(math.exp(log_value), log_value, dual.certificate,
                        dual.k_max, dual.configs, "poisson")


def exact_iv_law(g: LatticeGeometry, inv_temp: float, cfg: Optional[OracleConfig] = None,
                 degree: int = 0) -> Dict[Tuple[int, ...], float]:
    """整数值 GFF 的精确分布（直接枚举）"""
    _check_beta(inv_temp)
    cfg = cfg or OracleConfig()
    free, a = _free_block(g, degree)
    size = g.num_cells(degree)
    if len(free) == 0:
        return {tuple([0] * size): 1.0}
    lam = float(np.linalg.eigvalsh(a).min())
    K, _ = choose_cutoff(inv_temp * lam, len(free), cfg)
    total, pieces = _lattice_sum(a, inv_temp, K, collect=True)
    return _law_from_pieces(pieces, free, size, total)


# ----------------------------------------------------------------------
# Villain 求积
# ----------------------------------------------------------------------
def _winding_cutoff(beta: float) -> int:
    """|x| < 2π 时 |m| 超过该值的项 exp(-β/2 (x+2πm)²) < e^{-45}"""
    return int(math.ceil(math.sqrt(90.0 / beta) / TWO_PI)) + 2


def _edge_weight(beta: float, h: Optional[np.ndarray] = None) -> Callable[[np.ndarray], np.ndarray]:
    """
    每条边的周期化权重 Σ_m exp(-β/2 (x+2πm)²)，
    给出 h 时为 Σ_m exp(-β/2 (x+2πm)² + i h_e (x+2πm))
    """
    ms = np.arange(-_winding_cutoff(beta), _winding_cutoff(beta) + 1, dtype=float)

    def weight(grads: np.ndarray) -> np.ndarray:
        y = grads[..., None] + TWO_PI * ms
        w = np.exp(-0.5 * beta * y * y)
        if h is None:
            return w.sum(axis=-1)
        return (w * np.exp(1j * h[None, :, None] * y)).sum(axis=-1)

    return weight


def _grid_integrate(g: LatticeGeometry, axes: List[np.ndarray], edge_fn,
                    keep_axis: Optional[int] = None):
    """
    对自由角做张量积求和 ∫ Π_e edge_fn(dθ_e) dθ

    Args:
        axes: 每个自由角的节点
        keep_axis: 给出时返回沿该轴的边缘（未乘该轴的体积元）
    """
    free = g.free_cells(0)
    d0 = g.d0_matrix.toarray().astype(float)
    volume = float(np.prod([TWO_PI / len(ax) for ax in axes]))
    dim = len(axes)
    if dim == 0:
        return complex(np.prod(edge_fn(np.zeros((1, g.num_edges)))))
    if len(axes) > 1:
        rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, dim - 1)
        rest_shape = tuple(len(ax) for ax in axes[1:])
    else:
        rest = np.zeros((1, 0))
        rest_shape = ()
    out = None
    for i0, t0 in enumerate(axes[0]):
        theta = np.zeros((len(rest), g.num_vertices))
        theta[:, free[0]] = t0
        if dim > 1:
            theta[:, free[1:]] = rest
        w = np.prod(edge_fn(theta @ d0.T), axis=-1)
        if keep_axis is None:
            part = w.sum()
            out = part if out is None else out + part
        elif keep_axis == 0:
            if out is None:
                out = np.zeros(len(axes[0]), dtype=w.dtype)
            out[i0] = w.sum()
        else:
            reduced = w.reshape(rest_shape)
            others = tuple(j for j in range(dim - 1) if j != keep_axis - 1)
            reduced = reduced.sum(axis=others) if others else reduced
            out = reduced if out is None else out + reduced
    if keep_axis is None:
        return out * volume
    return out * volume * len(axes[keep_axis]) / TWO_PI


def _converged_quadrature(g: LatticeGeometry, edge_fn, cfg: OracleConfig) -> Tuple[complex, int, float]:
    dim = len(g.free_cells(0))
    if dim > MAX_ANGLES:
        raise SizeGuardError(f"Villain 求积最多支持 {MAX_ANGLES} 个自由角，收到 {dim}")
    nodes = cfg.quad_min_nodes
    previous = None
    change = float("inf")
    while True:
        if nodes ** dim > cfg.max_configs:
            raise TruncationError(f"求积节点 {nodes} 超出规模仍未收敛", change)
        axes = [TWO_PI * np.arange(nodes) / nodes for _ in range(dim)]
        value = _grid_integrate(g, axes, edge_fn)
        if previous is not None:
            change = abs(value - previous) / max(abs(value), 1e-300)
            if change < cfg.quad_rel_change:
                return value, nodes, change
        previous = value
        nodes *= 2
        if nodes > cfg.quad_max_nodes:
            raise TruncationError("求积节点数达到上限仍未收敛", float(change))


def exact_Z_villain(g: LatticeGeometry, beta: float,
                    cfg: Optional[OracleConfig] = None) -> OracleResult:
    """
    Z^Vil_β = ∫_{[0,2π)^N} Π_e Σ_m exp(-β/2 (dθ(e) + 2πm)²) dθ

    周期光滑被积函数的梯形求积，certificate 为最后一次加倍的相对变化。
    """
    _check_beta(beta)
    cfg = cfg or OracleConfig()
    value, nodes, change = _converged_quadrature(g, _edge_weight(beta), cfg)
    value = float(np.real(value))
    return OracleResult(value, math.log(value), change, 0, nodes, "quadrature")


def villain_theta_marginal(g: LatticeGeometry, beta: float, vertex: int, bins: int = 32,
                           cfg: Optional[OracleConfig] = None, sub_nodes: int = 16) -> np.ndarray:
    """
    θ(vertex) 落在 [2πj/bins, 2π(j+1)/bins) 中的精确概率

    目标轴在每个小区间内用中点节点，其余轴用收敛的梯形节点。
    """
    _check_beta(beta)
    cfg = cfg or OracleConfig()
    free = list(g.free_cells(0))
    if vertex not in free:
        raise InvalidParameterError("目标顶点必须是非根顶点")
    weight = _edge_weight(beta)
    _, nodes, _ = _converged_quadrature(g, weight, cfg)
    fine = bins * sub_nodes
    axes = [TWO_PI * np.arange(nodes) / nodes for _ in free]
    target = free.index(vertex)
    axes[target] = TWO_PI * (np.arange(fine) + 0.5) / fine
    density = np.real(_grid_integrate(g, axes, weight, keep_axis=target))
    probs = density.reshape(bins, sub_nodes).sum(axis=1)
    return probs / probs.sum()


def villain_joint_law(g: LatticeGeometry, beta: float, bins: int = 16, m_range: int = 3,
                      sub_nodes: int = 32) -> Dict[Tuple[int, int], float]:
    """
    单个自由角、单条边的图上 (θ 所在区间, m) 的联合分布

    Returns:
        {(区间编号, m): 概率}
    """
    _check_beta(beta)
    free = g.free_cells(0)
    if len(free) != 1 or g.num_edges != 1:
        raise SizeGuardError("联合分布只支持两顶点单边图")
    tail, head = g.edges[0]
    sign = 1.0 if head == free[0] else -1.0
    fine = bins * sub_nodes
    theta = TWO_PI * (np.arange(fine) + 0.5) / fine
    grads = sign * theta
    law: Dict[Tuple[int, int], float] = {}
    total = 0.0
    for m in range(-m_range, m_range + 1):
        w = np.exp(-0.5 * beta * (grads + TWO_PI * m) ** 2).reshape(bins, sub_nodes).sum(axis=1)
        for j in range(bins):
            law[(j, m)] = float(w[j])
        total += float(w.sum())
    return {k: v / total for k, v in law.items()}


def exact_model_law(model: str, g: LatticeGeometry, params: Dict,
                    cfg: Optional[OracleConfig] = None):
    """
    统一入口：coulomb / ivgff / villain_theta / villain_joint

    Args:
        params: coulomb 需要 beta（可选 degree）；ivgff 需要 inv_temp（可选 degree）；
                villain_theta 需要 beta、vertex（可选 bins）；villain_joint 需要 beta（可选 bins）
    """
    if model == "coulomb":
        return exact_coulomb_law(g, params["beta"], cfg, params.get("degree", 2))
    if model == "ivgff":
        return exact_iv_law(g, params["inv_temp"], cfg, params.get("degree", 0))
    if model == "villain_theta":
        return villain_theta_marginal(g, params["beta"], params["vertex"], params.get("bins", 32), cfg)
    if model == "villain_joint":
        return villain_joint_law(g, params["beta"], params.get("bins", 16))
    raise InvalidParameterError(f"未知模型: {model}")


def total_variation(law: Dict[Tuple, float], samples: np.ndarray) -> float:
    """精确分布与样本经验分布的全变差距离"""
    samples = np.atleast_2d(np.asarray(samples))
    keys, counts = np.unique(samples, axis=0, return_counts=True)
    empirical = {tuple(int(v) for v in k): c / len(samples) for k, c in zip(keys, counts)}
    support = set(law) | set(empirical)
    return 0.5 * sum(abs(law.get(k, 0.0) - empirical.get(k, 0.0)) for k in support)


def binned_total_variation(probs: np.ndarray, angles: np.ndarray) -> float:
    """区间概率与角度样本直方图之间的全变差距离"""
    bins = len(probs)
    idx = np.minimum((np.mod(angles, TWO_PI) / TWO_PI * bins).astype(int), bins - 1)
    empirical = np.bincount(idx, minlength=bins) / len(angles)
    return 0.5 * float(np.abs(empirical - probs).sum())


# ----------------------------------------------------------------------
# 转移公式
# ----------------------------------------------------------------------
def villain_transfer_check(g: LatticeGeometry, beta: float, h: np.ndarray,
                           cfg: Optional[OracleConfig] = None) -> Tuple[float, float]:
    """
    E^Vil[e^{i⟨dθ+2πm, h⟩}] 与 e^{-⟨h,h⟩/2β}·E^IV_{1/β}[e^{(1/β)⟨d*Ψ, h⟩}]（Ψ 在面上）

    倾斜把高度分布的中心移开，枚举盒相应加宽 ⌈‖h‖₁⌉。

    Returns:
        (左边, 右边)
    """
    _check_beta(beta)
    cfg = cfg or OracleConfig()
    h = np.asarray(h, dtype=float)
    if h.shape != (g.num_edges,):
        raise InvalidParameterError("h 必须是边上的 1-形式")
    z0, _, _ = _converged_quadrature(g, _edge_weight(beta), cfg)
    zh, _, _ = _converged_quadrature(g, _edge_weight(beta, h), cfg)
    lhs = float(np.real(zh / z0))

    free, a = _free_block(g, 2)
    if len(free) == 0:
        return lhs, math.exp(-float(h @ h) / (2 * beta))
    lam = float(np.linalg.eigvalsh(a).min())
    K, _ = choose_cutoff(lam / beta, len(free), cfg, margin=int(math.ceil(np.abs(h).sum())))
    # d* 从面到边：-(d1 的有根矩阵)^T
    codiff = face_codifferential(g)[:, free]

    def tilt(x: np.ndarray) -> np.ndarray:
        return np.exp((x @ codiff.T) @ h / beta)

    num, _ = _lattice_sum(a, 1.0 / beta, K, tilt=tilt)
    den, _ = _lattice_sum(a, 1.0 / beta, K)
    return lhs, float(num / den) * math.exp(-float(h @ h) / (2 * beta))


def face_codifferential(g: LatticeGeometry) -> np.ndarray:
    """d* 作用在面上的稠密矩阵（边 × 面），即有根 d1 的负转置"""
    return -d_matrix(g, 1).toarray().T.astype(float)


def iv_coulomb_transfer_check(g: LatticeGeometry, beta: float, weights: np.ndarray,
                              cfg: Optional[OracleConfig] = None,
                              degree: int = 2) -> Tuple[float, float]:
    """
    E^IV_{1/β}[e^{(1/β)⟨Ψ, w⟩}] 与 e^{⟨w,(-Δ)^{-1}w⟩/2β}·E^Coul_β[e^{2πi⟨Δ^{-1}q, w⟩}]

    Returns:
        (左边, 右边)
    """
    _check_beta(beta)
    cfg = cfg or OracleConfig()
    free, a = _free_block(g, degree)
    w = np.asarray(weights, dtype=float)[free]
    green = green_matrix(g, degree)[np.ix_(free, free)]
    gw = float(w @ green @ w)
    lam_a = float(np.linalg.eigvalsh(a).min())
    # 倾斜 e^{x·w/β} 把中心移到 (-Δ)^{-1}w，盒子相应加宽
    K_iv, _ = choose_cutoff(lam_a / beta, len(free), cfg,
                            margin=int(math.ceil(np.abs(green @ w).max(initial=0.0))))
    num, _ = _lattice_sum(a, 1.0 / beta, K_iv, tilt=lambda x: np.exp(x @ w / beta))
    den, _ = _lattice_sum(a, 1.0 / beta, K_iv)
    lhs = float(num / den)

    lam_g = 1.0 / float(np.linalg.eigvalsh(a).max())
    K_c, _ = choose_cutoff(TWO_PI_SQ * beta * lam_g, len(free), cfg)
    potential = green @ w

    def phase(x: np.ndarray) -> np.ndarray:
        # ⟨Δ^{-1}q, w⟩ = -⟨q, (-Δ)^{-1}w⟩
        return np.cos(-TWO_PI * (x @ potential))

    cnum, _ = _lattice_sum(green, TWO_PI_SQ * beta, K_c, tilt=phase)
    cden, _ = _lattice_sum(green, TWO_PI_SQ * beta, K_c)
    rhs = math.exp(gw / (2 * beta)) * float(cnum / cden)
    return lhs, rhs


# ----------------------------------------------------------------------
# 界与常数
# ----------------------------------------------------------------------
def free_energy_lower_bound(g: LatticeGeometry, degree: int, beta: float,
                            cfg: Optional[OracleConfig] = None) -> Dict:
    """
    自由能下界：log Z^IV_{1/β} ≥ log Z^GFF_{1/β} + (N/2)∫_0^{1/β} M(1/u)/u du

    Returns:
        包含 log_Z_iv、log_Z_gff、integral、log_bound、holds 的字典
    """
    _check_beta(beta)
    size = len(g.free_cells(degree))
    integral, err = integrate.quad(lambda u: error_function_M(1.0 / u) / u if u > 0 else 0.0,
                                   0.0, 1.0 / beta, limit=200)
    log_gff = exact_Z_gff(g, degree, 1.0 / beta)
    log_bound = log_gff + 0.5 * size * integral
    iv = exact_Z_iv(g, 1.0 / beta, cfg, degree)
    return {"log_Z_iv": iv.log_value, "log_Z_gff": log_gff, "integral": integral,
            "integral_error": err, "log_bound": log_bound, "iv_method": iv.method,
            "holds": bool(iv.log_value >= log_bound - 1e-10)}


def chessboard_beta0(delta: float) -> float:
    """小梯形质性质的逆温度阈值 12·log(8/δ)/δ²"""
    if not 0 < delta < 1:
        raise InvalidParameterError(f"δ 必须在 (0, 1) 内，收到 {delta}")
    return 12.0 * math.log(8.0 / delta) / delta ** 2


# ----------------------------------------------------------------------
# 恒等式套件
# ----------------------------------------------------------------------
def _check(name: str, lhs: float, rhs: float, tol: float, relative: bool = True) -> Dict:
    if relative:
        error = abs(lhs - rhs) / max(abs(lhs), 1e-300)
    else:
        error = abs(lhs - rhs)
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs), "error": float(error),
            "tol": tol, "status": "pass" if error < tol else "fail"}


def partition_identities(g: LatticeGeometry, beta: float,
                         cfg: Optional[OracleConfig] = None) -> List[Dict]:
    """
    同一张小图上的三个配分函数恒等式（库仑气体与 IV-GFF 都在面上）：

    - Z^Vil_β = Z^GFF_β · Z^Coul_β
    - Z^IV_{1/β} = Z^GFF_{1/β} · Z^Coul_β（Z^IV 直接枚举）
    - Z^IV_{1/β} = Z^Vil_β · √β^{|E|} / √(2π)^{2|V∖v0| - |E|}
    """
    cfg = cfg or OracleConfig()
    direct = OracleConfig(**{**cfg.to_dict(), "iv_method": "direct"})
    z_vil = exact_Z_villain(g, beta, cfg)
    z_coul = exact_Z_coulomb(g, beta, cfg)
    z_iv = exact_Z_iv(g, 1.0 / beta, direct)
    log_gff_v = exact_Z_gff(g, 0, beta)
    log_gff_f = exact_Z_gff(g, 2, 1.0 / beta)
    n_free = len(g.free_cells(0))
    edges = g.num_edges
    log_iv_from_vil = z_vil.log_value + 0.5 * edges * math.log(beta) - 0.5 * (2 * n_free - edges) * math.log(TWO_PI)
    results = [
        _check(f"Z_vil = Z_gff * Z_coul (beta={beta})", z_vil.value,
               math.exp(log_gff_v + z_coul.log_value), 1e-6),
        _check(f"Z_iv = Z_gff * Z_coul on faces (beta={beta})", z_iv.value,
               math.exp(log_gff_f + z_coul.log_value), 1e-6),
        _check(f"Z_iv = Z_vil * sqrt(beta)^E / sqrt(2pi)^(2V-E) (beta={beta})", z_iv.value,
               math.exp(log_iv_from_vil), 1e-6),
    ]
    for r in results:
        logger.info("%s: 相对误差 %.2e [%s]", r["name"], r["error"], r["status"])
    return results


def determinant_identity(g: LatticeGeometry) -> Dict:
    """det(-Δ) 在顶点与面上相等（生成树计数）"""
    return _check("det(-Lap_0) = det(-Lap_2)", log_det_minus_laplacian(g, 0),
                  log_det_minus_laplacian(g, 2), 1e-9, relative=False)


def bound_checks(beta_grid: Optional[np.ndarray] = None) -> List[Dict]:
    """误差函数与整数高斯方差的显式下界、Jacobi 恒等式"""
    results = []
    jac_betas = np.geomspace(0.1, 10.0, 20) if beta_grid is None else np.asarray(beta_grid)
    worst = max(jacobi_residual(float(b)) for b in jac_betas)
    results.append(_check("jacobi identity", worst, 0.0, 1e-10, relative=False))
    a_grid = np.linspace(0.0, 0.5, 11)
    slack = min(float(np.min(ig_variance(a_grid, b) - ig_lower_bound(a_grid, b)))
                for b in np.linspace(10.5, 30.0, 8))
    results.append({"name": "Var_IG >= exp(-beta(1-2a)/2)/16", "lhs": slack, "rhs": 0.0,
                    "error": max(-slack, 0.0), "tol": 0.0,
                    "status": "pass" if slack >= 0 else "fail"})
    m_slack = min(error_function_M(float(b)) - M_lower_bound(float(b))
                  for b in np.linspace(1.0 / 3.0, 3.0, 12))
    results.append({"name": "M(beta) >= 2 beta exp(-(2pi)^2 beta/2)", "lhs": m_slack, "rhs": 0.0,
                    "error": max(-m_slack, 0.0), "tol": 0.0,
                    "status": "pass" if m_slack >= 0 else "fail"})
    return results


def transfer_checks(g: LatticeGeometry, beta: float, rng: np.random.Generator,
                    count: int = 5, cfg: Optional[OracleConfig] = None) -> List[Dict]:
    """随机 h、w 上的两个转移公式"""
    results = []
    for i in range(count):
        h = rng.normal(0.0, 1.0, g.num_edges)
        lhs, rhs = villain_transfer_check(g, beta, h, cfg)
        results.append(_check(f"villain/iv transfer #{i} (beta={beta})", lhs, rhs, 1e-6))
        w = np.zeros(g.num_faces)
        w[g.free_cells(2)] = rng.normal(0.0, 1.0, len(g.free_cells(2)))
        lhs, rhs = iv_coulomb_transfer_check(g, beta, w, cfg)
        results.append(_check(f"iv/coulomb transfer #{i} (beta={beta})", lhs, rhs, 1e-6))
    return results


def identity_suite(g: LatticeGeometry, betas: List[float], seed: int = 0,
                   cfg: Optional[OracleConfig] = None) -> List[Dict]:
    """
    完整的恒等式套件：求积相关恒等式在 2×2 自由盒上，其余在给定几何上

    几何过大的检查记为 skipped。
    """
    cfg = cfg or OracleConfig()
    small = build_box(2, 2, "free")
    rng = np.random.default_rng(seed)
    results: List[Dict] = []
    for beta in betas:
        results.extend(partition_identities(small, beta, cfg))
        results.extend(transfer_checks(small, beta, rng, 5, cfg))
        try:
            direct = OracleConfig(**{**cfg.to_dict(), "iv_method": "direct"})
            z_iv = exact_Z_iv(g, 1.0 / beta, direct)
            z_coul = exact_Z_coulomb(g, beta, cfg)
            results.append(_check(f"Z_iv = Z_gff * Z_coul on {g} (beta={beta})", z_iv.value,
                                  math.exp(exact_Z_gff(g, 2, 1.0 / beta) + z_coul.log_value), 1e-6))
        except (SizeGuardError, TruncationError) as exc:
            results.append({"name": f"Z_iv = Z_gff * Z_coul on {g} (beta={beta})",
                            "status": "skipped", "reason": str(exc)})
        try:
            bound = free_energy_lower_bound(g, 0, beta, cfg)
            results.append({"name": f"free energy lower bound (beta={beta})",
                            "lhs": bound["log_Z_iv"], "rhs": bound["log_bound"],
                            "error": max(bound["log_bound"] - bound["log_Z_iv"], 0.0), "tol": 0.0,
                            "status": "pass" if bound["holds"] else "fail"})
        except (SizeGuardError, TruncationError) as exc:
            results.append({"name": f"free energy lower bound (beta={beta})",
                            "status": "skipped", "reason": str(exc)})
    results.append(determinant_identity(g))
    results.extend(bound_checks())
    return results
