"""
离散外微分模块

约定：
- 形式以全长数组存储（每个胞腔一个值），0-形式在 v0、2-形式在 f0 的值恒为 0
- d 在 0-形式上为 w(头) - w(尾)，在 1-形式上为面边界的有向和（f0 分量置零）
- d* = -d^T，Δ = d d* + d* d，在有根形式上负定
- 内积为胞腔上的直接求和
"""
import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (InvalidParameterError, NotClosedError, SizeGuardError,
                     SolverError)
from .lattice import (BoundaryCondition, Label, LatticeGeometry, build_lattice)

logger = logging.getLogger(__name__)

# 求解器选择阈值（按自由胞腔数）
DENSE_LIMIT = 4225
SPLU_LIMIT = 300_000
CG_RTOL = 1e-12
RESIDUAL_TOL = 1e-10
# 实值闭形式的容差：约为 n = 512 时累计舍入误差的 100 倍
CLOSED_TOL = 1e-10
GREEN_MATRIX_LIMIT = 5000


@dataclass
class Form:
    """某一阶胞腔上的取值序列，带阶数与几何引用"""
    degree: int
    values: np.ndarray
    geometry: LatticeGeometry

    def __post_init__(self):
        if self.degree not in (0, 1, 2):
            raise InvalidParameterError(f"形式阶数必须为 0、1 或 2，收到 {self.degree}")
        self.values = np.asarray(self.values)
        expected = self.geometry.num_cells(self.degree)
        if self.values.shape != (expected,):
            raise InvalidParameterError(
                f"{self.degree}-形式长度应为 {expected}，收到 {self.values.shape}")
        root = self.geometry.root_cell(self.degree)
        if root is not None and self.values[root] != 0:
            raise InvalidParameterError(
                f"{self.degree}-形式在根胞腔 {root} 上的值必须为 0，收到 {self.values[root]}")

    @classmethod
    def rooted(cls, g: LatticeGeometry, degree: int, values) -> "Form":
        """复制数组并把根胞腔置零"""
        values = np.array(values, copy=True)
        root = g.root_cell(degree)
        if root is not None:
            values[root] = 0
        return cls(degree, values, g)

    @classmethod
    def zeros(cls, g: LatticeGeometry, degree: int, dtype=float) -> "Form":
        return cls(degree, np.zeros(g.num_cells(degree), dtype=dtype), g)

    @classmethod
    def indicator(cls, g: LatticeGeometry, degree: int, cell: Label) -> "Form":
        """单个胞腔的示性形式（根胞腔给出零形式）"""
        values = np.zeros(g.num_cells(degree))
        index = g.vertex_index(cell) if degree == 0 else (
            g.face_index(cell) if degree == 2 else int(cell))
        values[index] = 1.0
        return cls.rooted(g, degree, values)

    @property
    def is_integer(self) -> bool:
        return np.issubdtype(self.values.dtype, np.integer)

    def _check(self, other: "Form"):
        if other.geometry is not self.geometry or other.degree != self.degree:
            raise InvalidParameterError("形式的几何或阶数不匹配")

    def __add__(self, other: "Form") -> "Form":
        self._check(other)
        return Form(self.degree, self.values + other.values, self.geometry)

    def __sub__(self, other: "Form") -> "Form":
        self._check(other)
        return Form(self.degree, self.values - other.values, self.geometry)

    def __neg__(self) -> "Form":
        return Form(self.degree, -self.values, self.geometry)

    def __mul__(self, scalar: float) -> "Form":
        return Form(self.degree, self.values * scalar, self.geometry)

    __rmul__ = __mul__

    def to_dict(self) -> Dict:
        """序列化为扁平数组，带阶数与几何哈希"""
        return {"degree": self.degree,
                "geometry_hash": self.geometry.geometry_hash,
                "values": self.values.tolist()}


# ----------------------------------------------------------------------
# 算子矩阵（按几何缓存）
# ----------------------------------------------------------------------
@lru_cache(maxsize=64)
def d_matrix(g: LatticeGeometry, degree: int) -> sp.csr_matrix:
    """带根约束的外微分矩阵：degree 0 时 v0 列置零，degree 1 时 f0 行置零"""
    if degree == 0:
        keep = np.ones(g.num_vertices)
        keep[g.root_vertex] = 0
        return (g.d0_matrix @ sp.diags(keep.astype(np.int64))).tocsr()
    if degree == 1:
        keep = np.ones(g.num_faces)
        keep[g.root_face] = 0
        return (sp.diags(keep.astype(np.int64)) @ g.d1_matrix).tocsr()
    raise InvalidParameterError("top degree：2-形式没有外微分")


@lru_cache(maxsize=64)
def laplacian_matrix(g: LatticeGeometry, degree: int) -> sp.csr_matrix:
    """Δ 在全长数组上的矩阵表示（根行、根列为零）"""
    if degree == 0:
        a0 = d_matrix(g, 0).astype(float)
        return (-(a0.T @ a0)).tocsr()
    if degree == 1:
        a0 = d_matrix(g, 0).astype(float)
        a1 = d_matrix(g, 1).astype(float)
        return (-(a0 @ a0.T) - (a1.T @ a1)).tocsr()
    if degree == 2:
        a1 = d_matrix(g, 1).astype(float)
        return (-(a1 @ a1.T)).tocsr()
    raise InvalidParameterError(f"形式阶数必须为 0、1 或 2，收到 {degree}")


def _keep_integer(f: Form, values: np.ndarray) -> np.ndarray:
    # 整数形式的像仍是整数形式
    values = np.asarray(values)
    if f.is_integer:
        return np.rint(values).astype(np.int64)
    return values


def d(f: Form) -> Form:
    """外微分 d，阶数加一"""
    if f.degree == 2:
        raise InvalidParameterError("top degree：2-形式没有外微分")
    values = d_matrix(f.geometry, f.degree) @ f.values
    return Form(f.degree + 1, _keep_integer(f, values), f.geometry)


def dstar(f: Form) -> Form:
    """余微分 d* = -d^T，阶数减一"""
    if f.degree == 0:
        raise InvalidParameterError("bottom degree：0-形式没有余微分")
    values = -(d_matrix(f.geometry, f.degree - 1).T @ f.values)
    return Form(f.degree - 1, _keep_integer(f, values), f.geometry)


def laplacian(f: Form) -> Form:
    """Δ = d d* + d* d"""
    values = laplacian_matrix(f.geometry, f.degree) @ f.values
    return Form(f.degree, values, f.geometry)


def inner(a: Form, b: Form) -> float:
    """⟨a, b⟩ = Σ_cells a·b"""
    a._check(b)
    return float(np.dot(a.values.astype(float), b.values.astype(float)))


# ----------------------------------------------------------------------
# Poisson 求解
# ----------------------------------------------------------------------
class PoissonSolver:
    """
    有根形式上的 Δ 求逆

    在自由胞腔上 -Δ 为对称正定矩阵 A：小规模用稠密 Cholesky，
    中等规模用稀疏 LU，大规模用 Jacobi 预条件共轭梯度。
    """

    def __init__(self, g: LatticeGeometry, degree: int):
        self.geometry = g
        self.degree = degree
        self.free = g.free_cells(degree)
        full = laplacian_matrix(g, degree)
        self.matrix = (-full[self.free][:, self.free]).tocsc()
        size = len(self.free)
        self.chol = None
        self.lu = None
        if size == 0:
            self.method = "empty"
        elif size <= DENSE_LIMIT:
            self.method = "cholesky"
            try:
                self.chol = la.cholesky(self.matrix.toarray(), lower=True)
            except la.LinAlgError as exc:
                raise SolverError(f"Cholesky 分解失败: {exc}", float("nan")) from exc
        elif size <= SPLU_LIMIT:
            self.method = "splu"
            self.lu = spla.splu(self.matrix)
        else:
            self.method = "cg"
            self.jacobi = sp.diags(1.0 / self.matrix.diagonal())
        logger.info("%d-形式 Poisson 求解器: %s（自由胞腔 %d）", degree, self.method, size)

    def _solve_free(self, rhs: np.ndarray) -> np.ndarray:
        if self.method == "cholesky":
            return la.cho_solve((self.chol, True), rhs)
        if self.method == "splu":
            return self.lu.solve(rhs)
        cols = rhs if rhs.ndim == 2 else rhs[:, None]
        out = np.empty_like(cols, dtype=float)
        for j in range(cols.shape[1]):
            x, info = spla.cg(self.matrix, cols[:, j], rtol=CG_RTOL,
                              maxiter=20 * len(self.free), M=self.jacobi)
            if info != 0:
                raise SolverError(f"共轭梯度未收敛（info={info}）",
                                  float(np.max(np.abs(self.matrix @ x - cols[:, j]))))
            out[:, j] = x
        return out if rhs.ndim == 2 else out[:, 0]

    def solve(self, rhs: np.ndarray, check: bool = True) -> np.ndarray:
        """
        求 u 使 Δu = rhs（rhs 为全长数组，根分量忽略）

        Returns:
            全长数组 u，根分量为 0
        """
        rhs = np.asarray(rhs, dtype=float)
        u = np.zeros(rhs.shape, dtype=float)
        if self.method == "empty":
            return u
        u[self.free] = -self._solve_free(rhs[self.free])
        if check:
            residual = laplacian_matrix(self.geometry, self.degree) @ u - _rooted(
                rhs, self.geometry.root_cell(self.degree))
            scale = max(float(np.max(np.abs(rhs))) if rhs.size else 0.0, 1e-300)
            worst = float(np.max(np.abs(residual))) if residual.size else 0.0
            if worst > RESIDUAL_TOL * scale:
                raise SolverError("Poisson 求解残差超出容差", worst)
        return u

    def sample_gaussian(self, z: np.ndarray) -> np.ndarray:
        """由标准正态向量 z 得到协方差为 (-Δ)^{-1} 的样本（仅 cholesky 方法）"""
        out = np.zeros(self.geometry.num_cells(self.degree))
        if self.method == "empty":
            return out
        out[self.free] = la.solve_triangular(self.chol.T, z, lower=False)
        return out


def _rooted(values: np.ndarray, root: Optional[int]) -> np.ndarray:
    if root is None:
        return values
    values = values.copy()
    values[root] = 0
    return values


@lru_cache(maxsize=64)
def get_solver(g: LatticeGeometry, degree: int) -> PoissonSolver:
    """每个 (几何, 阶数) 只分解一次"""
    return PoissonSolver(g, degree)


def solve_poisson(f: Form) -> Form:
    """返回 u 使 Δu = f，残差 ‖Δu - f‖∞ ≤ 1e-10·‖f‖∞"""
    u = get_solver(f.geometry, f.degree).solve(f.values)
    return Form(f.degree, u, f.geometry)


def green(g: LatticeGeometry, degree: int, a: Label, b: Label) -> float:
    """
    Green 函数 G(a, b) = (-Δ)^{-1}(a, b)，根胞腔处为 0

    Args:
        g: 几何
        degree: 0（顶点）或 2（面）
        a, b: 胞腔标签
    """
    if degree not in (0, 2):
        raise InvalidParameterError("Green 函数只对 0-形式和 2-形式定义")
    resolve = g.vertex_index if degree == 0 else g.face_index
    ia, ib = resolve(a), resolve(b)
    root = g.root_cell(degree)
    if root in (ia, ib):
        return 0.0
    rhs = np.zeros(g.num_cells(degree))
    rhs[ib] = -1.0
    return float(get_solver(g, degree).solve(rhs)[ia])


@lru_cache(maxsize=16)
def green_matrix(g: LatticeGeometry, degree: int) -> np.ndarray:
    """
    稠密 Green 矩阵（全长，根行列为 0），仅用于小几何

    Raises:
        SizeGuardError: 自由胞腔数超过 GREEN_MATRIX_LIMIT
    """
    free = g.free_cells(degree)
    if len(free) > GREEN_MATRIX_LIMIT:
        raise SizeGuardError(f"稠密 Green 矩阵过大：{len(free)} 个自由胞腔")
    size = g.num_cells(degree)
    out = np.zeros((size, size))
    if len(free):
        a = (-laplacian_matrix(g, degree)[free][:, free]).toarray()
        inv = la.cho_solve(la.cho_factor(a, lower=True), np.eye(len(free)))
        out[np.ix_(free, free)] = 0.5 * (inv + inv.T)
    return out


def log_det_minus_laplacian(g: LatticeGeometry, degree: int) -> float:
    """log det(-Δ) 在自由胞腔上"""
    free = g.free_cells(degree)
    if len(free) == 0:
        return 0.0
    a = (-laplacian_matrix(g, degree)[free][:, free]).toarray()
    sign, logdet = np.linalg.slogdet(a)
    if sign <= 0:
        raise SolverError("-Δ 不是正定矩阵", float(sign))
    return float(logdet)


# ----------------------------------------------------------------------
# 整数 Poincaré 原函数
# ----------------------------------------------------------------------
@lru_cache(maxsize=64)
def _dual_tree(g: LatticeGeometry) -> Tuple[np.ndarray, np.ndarray]:
    """以 f0 为根的对偶图 BFS 生成树：返回 (BFS 顺序, 每个面连向父面的边)"""
    neighbors: List[List[Tuple[int, int]]] = [[] for _ in range(g.num_faces)]
    faces_of_edge: Dict[int, List[int]] = {}
    for f, incidence in enumerate(g.face_boundary):
        for e, _ in incidence:
            faces_of_edge.setdefault(e, []).append(f)
    for e in range(g.num_edges):
        f1, f2 = faces_of_edge[e]
        if f1 != f2:
            neighbors[f1].append((e, f2))
            neighbors[f2].append((e, f1))
    return _bfs(g.root_face, neighbors, g.num_faces)


@lru_cache(maxsize=64)
def _primal_tree(g: LatticeGeometry) -> Tuple[np.ndarray, np.ndarray]:
    """以 v0 为根的原图 BFS 生成树"""
    indptr, nbrs, eids = g.neighbor_csr
    neighbors = [list(zip(eids[indptr[v]:indptr[v + 1]].tolist(),
                          nbrs[indptr[v]:indptr[v + 1]].tolist()))
                 for v in range(g.num_vertices)]
    return _bfs(g.root_vertex, neighbors, g.num_vertices)


def _bfs(root: int, neighbors: List[List[Tuple[int, int]]], count: int):
    parent_edge = np.full(count, -1, dtype=np.int64)
    seen = np.zeros(count, dtype=bool)
    seen[root] = True
    order = [root]
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for e, v in neighbors[u]:
            if not seen[v]:
                seen[v] = True
                parent_edge[v] = e
                order.append(v)
                queue.append(v)
    if len(order) != count:
        raise InvalidParameterError("图不连通")
    return np.array(order, dtype=np.int64), parent_edge


def _is_integral(values: np.ndarray) -> bool:
    if np.issubdtype(values.dtype, np.integer):
        return True
    return bool(np.all(np.isfinite(values)) and np.all(values == np.round(values)))


def integer_primitive(q: Form) -> Form:
    """
    整数 2-形式 q 的确定性整数原函数 n_q，满足 d n_q = q

    沿以 f0 为根的对偶 BFS 树，按逆 BFS 顺序处理每个面：
    把该面连向父面的树边取值定为使面边界和等于 q(f) 的整数。
    """
    if q.degree != 2:
        raise InvalidParameterError("integer_primitive 需要 2-形式")
    if not _is_integral(q.values):
        raise InvalidParameterError("integer_primitive 需要整数值输入")
    g = q.geometry
    charges = np.round(q.values).astype(np.int64)
    order, parent_edge = _dual_tree(g)
    d1 = g.d1_matrix
    n_q = np.zeros(g.num_edges, dtype=np.int64)
    for f in order[::-1]:
        if f == g.root_face:
            continue
        e_f = parent_edge[f]
        start, stop = d1.indptr[f], d1.indptr[f + 1]
        cols, coeffs = d1.indices[start:stop], d1.data[start:stop]
        on_tree = cols == e_f
        # 树边在面边界上恰好出现一次，系数为 ±1
        sign = int(coeffs[on_tree].sum())
        rest = int(np.dot(coeffs[~on_tree], n_q[cols[~on_tree]]))
        n_q[e_f] = (charges[f] - rest) * sign
    return Form(1, n_q, g)


def scalar_primitive(h: Form, tol: float = CLOSED_TOL) -> Form:
    """
    闭 1-形式 h 的唯一有根原函数 ψ：dψ = h，ψ(v0) = 0

    Raises:
        NotClosedError: 存在面 f ≠ f0 使 |dh(f)| 超过容差（整数输入容差为 0）
    """
    if h.degree != 1:
        raise InvalidParameterError("scalar_primitive 需要 1-形式")
    g = h.geometry
    curl = d(h).values
    limit = 0 if h.is_integer else tol
    bad = np.flatnonzero(np.abs(curl) > limit)
    if len(bad):
        raise NotClosedError(int(bad[0]), float(curl[bad[0]]))
    order, parent_edge = _primal_tree(g)
    psi = np.zeros(g.num_vertices, dtype=h.values.dtype)
    for v in order[1:]:
        e = parent_edge[v]
        tail, head = g.edges[e]
        if head == v:
            psi[v] = psi[tail] + h.values[e]
        else:
            psi[v] = psi[head] - h.values[e]
    return Form(0, psi, g)


def path_indicator(g: LatticeGeometry, path: Sequence[Label]) -> Form:
    """
    顶点路径 γ 的带符号示性 1-形式 E_γ，满足 d*E_γ = 1_{起点} - 1_{终点}（有根意义下）
    """
    indices = [g.vertex_index(v) for v in path]
    values = np.zeros(g.num_edges, dtype=np.int64)
    for u, v in zip(indices[:-1], indices[1:]):
        forward = np.flatnonzero((g.edges[:, 0] == u) & (g.edges[:, 1] == v))
        backward = np.flatnonzero((g.edges[:, 0] == v) & (g.edges[:, 1] == u))
        if len(forward):
            values[forward[0]] += 1
        elif len(backward):
            values[backward[0]] -= 1
        else:
            raise InvalidParameterError(f"路径中的顶点 {u} 与 {v} 不相邻")
    return Form(1, values, g)


# ----------------------------------------------------------------------
# 调和延拓与 Green 渐近
# ----------------------------------------------------------------------
def harmonic_two_point(R: int) -> Tuple[Form, float]:
    """
    Λ_R（Zero 边界）上在 0 处取 0、在 1 = (1, 0) 处取 1 的调和延拓

    以原点为根，f̂ = G(1, ·)/G(1, 1)，能量 ⟨d f̂, d f̂⟩ = 1/G(1, 1)。

    Returns:
        (f̂, 能量)
    """
    if R < 2:
        raise InvalidParameterError(f"调和延拓需要 R ≥ 2，收到 {R}")
    g = build_lattice(R, BoundaryCondition.ZERO, root_vertex=(0, 0))
    b = g.vertex_index((1, 0))
    rhs = np.zeros(g.num_vertices)
    rhs[b] = -1.0
    column = get_solver(g, 0).solve(rhs)
    fhat = Form(0, column / column[b], g)
    return fhat, float(1.0 / column[b])


def green_asymptotics_table(ns: Iterable[int]) -> pd.DataFrame:
    """
    Zero 边界下 G(0,0) - (1/2π)·log n 的数值表

    Returns:
        包含 n、G00、G00 - log(n)/(2π) 列的数据框
    """
    rows = []
    for n in ns:
        g = build_lattice(n, BoundaryCondition.ZERO)
        g00 = green(g, 0, (0, 0), (0, 0))
        rows.append({"n": n, "G00": g00, "G00_minus_log": g00 - np.log(n) / (2 * np.pi)})
    return pd.DataFrame(rows)
