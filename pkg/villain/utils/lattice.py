"""
格点几何模块

在球面上嵌入的正方格点 Λ_n = [-n, n]^2，支持两种边界条件：
- Free：(2n+1)^2 个顶点，外部面 ∞ 作为根面 f0，根顶点 v0 = (0, 0)
- Zero：在 Free 图上加一个连线顶点 ∞（即 v0），边界顶点每条所在边各连一条边到 ∞，
  因此角点有两条；根面 f0 为左下角在 (0, 0) 的单位正方形

编号规则（所有随机模拟的可复现性依赖于此）：
- 顶点按坐标字典序，∞ 排最后
- 边的方向：尾点为字典序较小的端点，连到 ∞ 的边指向 ∞；按 (尾, 头, 中点) 排序
- 面按中心坐标字典序，外部面排最后
"""
import hashlib
import json
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameterError

logger = logging.getLogger(__name__)

# 无穷远点（Zero 边界的连线顶点 / Free 边界的外部面）的标签
INFINITY = "inf"

Label = Union[int, str, Tuple[float, float]]
Incidence = Tuple[Tuple[int, int], ...]


class BoundaryCondition(str, Enum):
    FREE = "free"
    ZERO = "zero"


@dataclass(frozen=True, eq=False)
class LatticeGeometry:
    """
    球面上的胞腔复形：顶点、有向边、有向面，以及标记的根顶点和根面。

    对象构造后不可变，可以被任意多个采样器只读共享；
    以对象身份作为缓存键（算子矩阵、分解都挂在实例上）。
    """
    width: int
    height: int
    origin: Tuple[int, int]
    bc: BoundaryCondition
    vertex_coords: np.ndarray
    edges: np.ndarray
    edge_midpoints: np.ndarray
    face_centers: np.ndarray
    face_boundary: Tuple[Incidence, ...]
    root_vertex: int
    root_face: int
    is_dual: bool = False
    dual_map: np.ndarray = field(default=None)

    @property
    def n(self) -> int:
        """格点半径（仅对中心对称的 Λ_n 有意义）"""
        return (self.width - 1) // 2

    @property
    def num_vertices(self) -> int:
        return len(self.vertex_coords)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    @property
    def num_faces(self) -> int:
        return len(self.face_centers)

    def num_cells(self, degree: int) -> int:
        if degree == 0:
            return self.num_vertices
        if degree == 1:
            return self.num_edges
        if degree == 2:
            return self.num_faces
        raise InvalidParameterError(f"形式阶数必须为 0、1 或 2，收到 {degree}")

    def root_cell(self, degree: int) -> Optional[int]:
        """degree 阶形式的根胞腔（1-形式没有根）"""
        if degree == 0:
            return self.root_vertex
        if degree == 2:
            return self.root_face
        return None

    def free_cells(self, degree: int) -> np.ndarray:
        """去掉根胞腔后的胞腔编号"""
        cells = np.arange(self.num_cells(degree))
        root = self.root_cell(degree)
        return cells if root is None else cells[cells != root]

    # ------------------------------------------------------------------
    # 标签与编号
    # ------------------------------------------------------------------
    @cached_property
    def _vertex_lookup(self) -> Dict:
        return _build_lookup(self.vertex_coords)

    @cached_property
    def _face_lookup(self) -> Dict:
        return _build_lookup(self.face_centers)

    def vertex_index(self, label: Label) -> int:
        """顶点标签（坐标元组、"inf" 或编号）转为编号"""
        return _resolve(label, self._vertex_lookup, self.num_vertices, "顶点")

    def face_index(self, label: Label) -> int:
        """面标签（中心坐标、"inf" 或编号）转为编号"""
        return _resolve(label, self._face_lookup, self.num_faces, "面")

    def vertex_label(self, index: int):
        x, y = self.vertex_coords[index]
        if not np.isfinite(x):
            return INFINITY
        return (int(x), int(y)) if not self.is_dual else (float(x), float(y))

    # ------------------------------------------------------------------
    # 关联矩阵（无根约束，calculus 模块负责加上根约束）
    # ------------------------------------------------------------------
    @cached_property
    def d0_matrix(self) -> sp.csr_matrix:
        """边 × 顶点 关联矩阵：(d0 w)(e) = w(头) - w(尾)"""
        E = self.num_edges
        rows = np.repeat(np.arange(E), 2)
        cols = self.edges.reshape(-1)
        vals = np.tile(np.array([-1, 1], dtype=np.int64), E)
        return sp.csr_matrix((vals, (rows, cols)), shape=(E, self.num_vertices))

    @cached_property
    def d1_matrix(self) -> sp.csr_matrix:
        """面 × 边 关联矩阵：(d1 h)(f) = Σ 符号·h(e)，重复出现的边自动相消"""
        rows, cols, vals = [], [], []
        for f, incidence in enumerate(self.face_boundary):
            for e, s in incidence:
                rows.append(f)
                cols.append(e)
                vals.append(s)
        return sp.csr_matrix((np.array(vals, dtype=np.int64), (rows, cols)),
                             shape=(self.num_faces, self.num_edges))

    @cached_property
    def degrees(self) -> np.ndarray:
        """顶点度数（平行边分别计数）"""
        deg = np.zeros(self.num_vertices, dtype=np.int64)
        np.add.at(deg, self.edges[:, 0], 1)
        np.add.at(deg, self.edges[:, 1], 1)
        return deg

    @cached_property
    def neighbor_csr(self) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """
        顶点邻接表（CSR 形式），供 numba 内核使用

        Returns:
            (indptr, neighbors, edge_ids)：顶点 v 的邻居为 neighbors[indptr[v]:indptr[v+1]]
        """
        V = self.num_vertices
        pairs = []
        for e, (t, h) in enumerate(self.edges):
            pairs.append((t, h, e))
            pairs.append((h, t, e))
        pairs.sort()
        indptr = np.zeros(V + 1, dtype=np.int64)
        for v, _, _ in pairs:
            indptr[v + 1] += 1
        indptr = np.cumsum(indptr)
        neighbors = np.array([p[1] for p in pairs], dtype=np.int64)
        edge_ids = np.array([p[2] for p in pairs], dtype=np.int64)
        return indptr, neighbors, edge_ids

    # ------------------------------------------------------------------
    # 序列化
    # ------------------------------------------------------------------
    def to_dict(self) -> Dict:
        """几何导出为 JSON 友好的字典（胞腔、关联关系、根）"""
        def coords(arr):
            return [None if not np.isfinite(x) else [float(x), float(y)] for x, y in arr]

        return {
            "width": self.width,
            "height": self.height,
            "origin": list(self.origin),
            "bc": self.bc.value,
            "is_dual": self.is_dual,
            "vertices": coords(self.vertex_coords),
            "edges": self.edges.tolist(),
            "faces": [[list(p) for p in inc] for inc in self.face_boundary],
            "root_vertex": int(self.root_vertex),
            "root_face": int(self.root_face),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    @cached_property
    def geometry_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()[:16]

    def __repr__(self) -> str:
        kind = "dual " if self.is_dual else ""
        return (f"LatticeGeometry({kind}{self.bc.value} {self.width}x{self.height}, "
                f"V={self.num_vertices}, E={self.num_edges}, F={self.num_faces})")


def _key(x: float, y: float):
    if not (np.isfinite(x) and np.isfinite(y)):
        return INFINITY
    return (round(float(x), 6), round(float(y), 6))


def _build_lookup(coords: np.ndarray) -> Dict:
    return {_key(x, y): i for i, (x, y) in enumerate(coords)}


def _resolve(label: Label, lookup: Dict, count: int, kind: str) -> int:
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        if not 0 <= int(label) < count:
            raise InvalidParameterError(f"{kind}编号 {label} 超出范围 [0, {count})")
        return int(label)
    key = INFINITY if label == INFINITY else _key(*label)
    if key not in lookup:
        raise InvalidParameterError(f"找不到{kind} {label}")
    return lookup[key]


def _cross(a: np.ndarray, b: np.ndarray) -> float:
    return float(a[0] * b[1] - a[1] * b[0])


def _angle(point: np.ndarray, center: np.ndarray) -> float:
    if np.all(np.isfinite(center)):
        point = point - center
    return math.atan2(point[1], point[0])


def _cyclic(center: np.ndarray, incidence: List[Tuple[int, int]],
            midpoints: np.ndarray) -> Incidence:
    """按边中点绕面中心的极角排序，得到循环边界序列"""
    ordered = sorted(incidence, key=lambda p: (_angle(midpoints[p[0]], center), p[0], p[1]))
    return tuple((int(e), int(s)) for e, s in ordered)


def build_box(width: int, height: int, bc: Union[BoundaryCondition, str] = BoundaryCondition.FREE,
              origin: Tuple[int, int] = (0, 0),
              root_vertex: Optional[Label] = None,
              root_face: Optional[Label] = None) -> LatticeGeometry:
    """
    构造 width × height 顶点的矩形格点（嵌入球面）

    Args:
        width: x 方向顶点数
        height: y 方向顶点数
        bc: 边界条件
        origin: 左下角顶点坐标
        root_vertex: 根顶点标签，默认按边界条件选取
        root_face: 根面标签，默认按边界条件选取

    Returns:
        LatticeGeometry
    """
    bc = BoundaryCondition(bc)
    if width < 1 or height < 1 or width * height < 2:
        raise InvalidParameterError(f"格点尺寸不合法: {width}x{height}")
    if bc == BoundaryCondition.ZERO and (width < 2 or height < 2):
        raise InvalidParameterError("Zero 边界条件要求宽和高至少为 2")

    x0, y0 = origin
    x1, y1 = x0 + width - 1, y0 + height - 1

    # 1. 顶点（字典序，∞ 最后）
    coords = [(float(x), float(y)) for x in range(x0, x1 + 1) for y in range(y0, y1 + 1)]
    if bc == BoundaryCondition.ZERO:
        coords.append((np.inf, np.inf))
    vertex_coords = np.array(coords, dtype=float)
    vidx = {(int(x), int(y)): i for i, (x, y) in enumerate(coords) if np.isfinite(x)}
    inf_vertex = len(coords) - 1

    # 2. 边：(尾, 头, 中点, 方向)
    raw_edges = []
    for x in range(x0, x1 + 1):
        for y in range(y0, y1 + 1):
            if x < x1:
                raw_edges.append((vidx[(x, y)], vidx[(x + 1, y)], (x + 0.5, y), (1.0, 0.0)))
            if y < y1:
                raw_edges.append((vidx[(x, y)], vidx[(x, y + 1)], (x, y + 0.5), (0.0, 1.0)))
    sides = {
        "left": ([(x0, y) for y in range(y0, y1 + 1)], (-1.0, 0.0)),
        "right": ([(x1, y) for y in range(y0, y1 + 1)], (1.0, 0.0)),
        "bottom": ([(x, y0) for x in range(x0, x1 + 1)], (0.0, -1.0)),
        "top": ([(x, y1) for x in range(x0, x1 + 1)], (0.0, 1.0)),
    }
    if bc == BoundaryCondition.ZERO:
        for side_vertices, (ox, oy) in sides.values():
            for (x, y) in side_vertices:
                raw_edges.append((vidx[(x, y)], inf_vertex, (x + 0.5 * ox, y + 0.5 * oy), (ox, oy)))
    raw_edges.sort(key=lambda r: (r[0], r[1], r[2]))
    edges = np.array([(t, h) for t, h, _, _ in raw_edges], dtype=np.int64)
    midpoints = np.array([m for _, _, m, _ in raw_edges], dtype=float)
    directions = np.array([d for _, _, _, d in raw_edges], dtype=float)
    eidx = {(round(m[0], 6), round(m[1], 6)): i for i, m in enumerate(midpoints)}

    def edge_at(mx, my):
        return eidx[(round(mx, 6), round(my, 6))]

    # 3. 有限中心的面：方向由叉积 (中点 - 中心) × 方向 的符号决定（逆时针为正）
    finite_faces: List[Tuple[Tuple[float, float], List[int]]] = []
    for x in range(x0, x1):
        for y in range(y0, y1):
            finite_faces.append(((x + 0.5, y + 0.5), [
                edge_at(x + 0.5, y), edge_at(x + 1, y + 0.5),
                edge_at(x + 0.5, y + 1), edge_at(x, y + 0.5)]))
    if bc == BoundaryCondition.ZERO:
        for y in range(y0, y1):
            finite_faces.append(((x0 - 0.5, y + 0.5), [
                edge_at(x0, y + 0.5), edge_at(x0 - 0.5, y), edge_at(x0 - 0.5, y + 1)]))
            finite_faces.append(((x1 + 0.5, y + 0.5), [
                edge_at(x1, y + 0.5), edge_at(x1 + 0.5, y), edge_at(x1 + 0.5, y + 1)]))
        for x in range(x0, x1):
            finite_faces.append(((x + 0.5, y0 - 0.5), [
                edge_at(x + 0.5, y0), edge_at(x, y0 - 0.5), edge_at(x + 1, y0 - 0.5)]))
            finite_faces.append(((x + 0.5, y1 + 0.5), [
                edge_at(x + 0.5, y1), edge_at(x, y1 + 0.5), edge_at(x + 1, y1 + 0.5)]))
        for cx, cy in [(x0, y0), (x0, y1), (x1, y0), (x1, y1)]:
            ox = -0.5 if cx == x0 else 0.5
            oy = -0.5 if cy == y0 else 0.5
            finite_faces.append(((cx + ox, cy + oy), [
                edge_at(cx + ox, cy), edge_at(cx, cy + oy)]))

    faces: List[Tuple[Tuple[float, float], List[Tuple[int, int]]]] = []
    square_count = np.zeros(len(edges), dtype=np.int64)
    square_sign = np.zeros(len(edges), dtype=np.int64)
    for center, edge_ids in finite_faces:
        c = np.array(center)
        incidence = []
        for e in edge_ids:
            s = _cross(midpoints[e] - c, directions[e])
            if s == 0.0:
                raise AssertionError(f"面 {center} 的边 {e} 方向退化")
            incidence.append((e, 1 if s > 0 else -1))
            square_count[e] += 1
            square_sign[e] = 1 if s > 0 else -1
        faces.append((center, incidence))

    # 4. Free 边界的外部面：每条边共出现两次，不足的由外部面补上
    if bc == BoundaryCondition.FREE:
        outer = []
        for e in range(len(edges)):
            if square_count[e] == 1:
                outer.append((e, -int(square_sign[e])))
            elif square_count[e] == 0:
                outer.extend([(e, 1), (e, -1)])
        faces.append(((np.inf, np.inf), outer))

    faces.sort(key=lambda f: (not np.isfinite(f[0][0]), f[0]))
    face_centers = np.array([c for c, _ in faces], dtype=float)
    face_boundary = tuple(_cyclic(np.array(c), inc, midpoints) for c, inc in faces)

    geometry = LatticeGeometry(
        width=width, height=height, origin=(int(x0), int(y0)), bc=bc,
        vertex_coords=vertex_coords, edges=edges, edge_midpoints=midpoints,
        face_centers=face_centers, face_boundary=face_boundary,
        root_vertex=0, root_face=0,
        dual_map=np.arange(len(face_centers)),
    )

    # 5. 默认根
    center = np.array([x0 + (width - 1) / 2.0, y0 + (height - 1) / 2.0])
    if bc == BoundaryCondition.FREE:
        dist = np.linalg.norm(vertex_coords - center, axis=1)
        default_vertex = int(np.argmin(dist))
        default_face = len(face_centers) - 1
    else:
        default_vertex = inf_vertex
        target = np.floor(center) + 0.5
        dist = np.linalg.norm(np.where(np.isfinite(face_centers), face_centers, 1e18) - target, axis=1)
        default_face = int(np.argmin(dist))
    geometry = with_roots(
        replace(geometry, root_vertex=default_vertex, root_face=default_face),
        root_vertex=root_vertex, root_face=root_face)
    logger.debug("构造格点 %r", geometry)
    return geometry


def build_lattice(n: int, bc: Union[BoundaryCondition, str] = BoundaryCondition.FREE,
                  root_vertex: Optional[Label] = None,
                  root_face: Optional[Label] = None) -> LatticeGeometry:
    """
    构造 Λ_n = [-n, n]^2 在给定边界条件下的几何

    Args:
        n: 格点半径，n ≥ 1
        bc: 边界条件（free 或 zero）
        root_vertex: 覆盖默认根顶点
        root_face: 覆盖默认根面

    Returns:
        LatticeGeometry
    """
    if int(n) != n or n < 1:
        raise InvalidParameterError(f"格点半径 n 必须是不小于 1 的整数，收到 {n}")
    return build_box(2 * n + 1, 2 * n + 1, bc, origin=(-n, -n),
                     root_vertex=root_vertex, root_face=root_face)


def with_roots(g: LatticeGeometry, root_vertex: Optional[Label] = None,
               root_face: Optional[Label] = None) -> LatticeGeometry:
    """返回只改变根顶点 / 根面的几何副本"""
    if root_vertex is None and root_face is None:
        return g
    rv = g.root_vertex if root_vertex is None else g.vertex_index(root_vertex)
    rf = g.root_face if root_face is None else g.face_index(root_face)
    return replace(g, root_vertex=rv, root_face=rf)


def dual_geometry(g: LatticeGeometry) -> LatticeGeometry:
    """
    对偶几何：g 的面变为对偶顶点，g 的顶点变为对偶面，边 e 与对偶边 e* 编号相同。

    对偶边 e* 从 e 以负号出现的面指向以正号出现的面，于是对偶的 d0 等于 g 的 d1 转置；
    对偶面 v* 中 e* 的符号为 +1 当且仅当 v 是 e 的头，于是对偶的 d1 等于 g 的 d0 转置。
    两次取对偶得到与 g 完全相同的编号与符号。
    """
    plus = np.full(g.num_edges, -1, dtype=np.int64)
    minus = np.full(g.num_edges, -1, dtype=np.int64)
    for f, incidence in enumerate(g.face_boundary):
        for e, s in incidence:
            if s > 0:
                plus[e] = f
            else:
                minus[e] = f
    if np.any(plus < 0) or np.any(minus < 0):
        raise InvalidParameterError("几何不合法：存在没有两侧面的边")
    dual_edges = np.stack([minus, plus], axis=1)

    incidences: List[List[Tuple[int, int]]] = [[] for _ in range(g.num_vertices)]
    for e, (t, h) in enumerate(g.edges):
        incidences[t].append((e, -1))
        incidences[h].append((e, 1))
    face_boundary = tuple(_cyclic(g.vertex_coords[v], inc, g.edge_midpoints)
                          for v, inc in enumerate(incidences))

    return LatticeGeometry(
        width=g.width, height=g.height, origin=g.origin, bc=g.bc,
        vertex_coords=g.face_centers.copy(), edges=dual_edges,
        edge_midpoints=g.edge_midpoints.copy(), face_centers=g.vertex_coords.copy(),
        face_boundary=face_boundary,
        root_vertex=g.root_face, root_face=g.root_vertex,
        is_dual=not g.is_dual,
        dual_map=np.arange(g.num_vertices),
    )


def validate_geometry(g: LatticeGeometry) -> List[str]:
    """
    检查几何不变量，返回问题列表（空列表表示通过）

    检查项：Euler 关系、每条边恰好出现两次且符号相反、d1∘d0 = 0、根编号合法
    """
    problems = []
    euler = g.num_vertices - g.num_edges + g.num_faces
    if euler != 2:
        problems.append(f"Euler 关系不成立: V-E+F = {euler}")

    appearances = np.zeros(g.num_edges, dtype=np.int64)
    signed = np.zeros(g.num_edges, dtype=np.int64)
    for incidence in g.face_boundary:
        for e, s in incidence:
            appearances[e] += 1
            signed[e] += s
    bad = np.flatnonzero((appearances != 2) | (signed != 0))
    if len(bad):
        problems.append(f"边 {bad[:5].tolist()} 的面关联不是一正一负")

    if (g.d1_matrix @ g.d0_matrix).count_nonzero():
        problems.append("d1∘d0 不为零")
    if not 0 <= g.root_vertex < g.num_vertices:
        problems.append("根顶点编号越界")
    if not 0 <= g.root_face < g.num_faces:
        problems.append("根面编号越界")
    return problems


def edges_between(g: LatticeGeometry, f1: int, f2: int) -> List[int]:
    """分隔面 f1 与 f2 的边"""
    a = {e for e, _ in g.face_boundary[f1]}
    b = {e for e, _ in g.face_boundary[f2]}
    return sorted(a & b) if f1 != f2 else []


def window_edges(g: LatticeGeometry, center: Sequence[int], radius: int) -> np.ndarray:
    """两个端点都落在 center + [-radius, radius]^2 内的边"""
    cx, cy = center
    coords = g.vertex_coords
    inside = (np.isfinite(coords[:, 0])
              & (np.abs(coords[:, 0] - cx) <= radius)
              & (np.abs(coords[:, 1] - cy) <= radius))
    mask = inside[g.edges[:, 0]] & inside[g.edges[:, 1]]
    return np.flatnonzero(mask)
