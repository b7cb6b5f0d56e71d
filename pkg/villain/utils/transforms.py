"""
Villain 耦合与 (GFF, 库仑气体) 之间的双射，以及换根映射

正变换：
    q = dm，n_q 为 q 的整数原函数，ψ 为 m - n_q 的有根原函数，
    φ = θ + 2πψ + 2π d*Δ^{-1} n_q
逆变换：
    θ̃ = φ - 2π d*Δ^{-1} n_q，θ = θ̃ mod 2π，m = n_q + d⌊θ̃/2π⌋
"""
import logging
from dataclasses import dataclass
from enum import Enum
from typing import Tuple, Union

import numpy as np

from .calculus import (Form, d, d_matrix, dstar, get_solver, inner,
                       integer_primitive, scalar_primitive, solve_poisson)
from .errors import InvalidParameterError
from .ig_dist import TWO_PI, TWO_PI_SQ
from .lattice import Label, LatticeGeometry, with_roots
from .samplers import CoulombState, IVState, VillainState, charges_from_m

logger = logging.getLogger(__name__)


@dataclass
class DecoupledPair:
    """(φ, q)：φ 为实 0-形式，q 为整数 2-形式，同一几何"""
    phi: Form
    q: Form

    def __post_init__(self):
        if self.phi.degree != 0 or self.q.degree != 2:
            raise InvalidParameterError("DecoupledPair 需要 0-形式 φ 与 2-形式 q")
        if self.phi.geometry is not self.q.geometry:
            raise InvalidParameterError("φ 与 q 的几何不一致")
        if not self.q.is_integer:
            raise InvalidParameterError("q 必须为整数 2-形式")

    @property
    def geometry(self) -> LatticeGeometry:
        return self.phi.geometry


def _charge_correction(n_q: Form) -> Form:
    """2π d*Δ^{-1} n_q（0-形式）"""
    real = Form(1, n_q.values.astype(float), n_q.geometry)
    return dstar(solve_poisson(real)) * TWO_PI


def decouple(state: VillainState) -> DecoupledPair:
    """
    (θ, m) ↦ (φ, q)

    ψ 依赖于 n_q 的选取，(φ, q) 不依赖。
    """
    g = state.geometry
    q = d(state.m)
    n_q = integer_primitive(q)
    psi = scalar_primitive(state.m - n_q)
    correction = _charge_correction(n_q)
    phi_values = state.theta.values.astype(float) + TWO_PI * psi.values + correction.values
    return DecoupledPair(Form(0, phi_values, g), q)


def decouple_batch(g: LatticeGeometry, thetas: np.ndarray,
                   ms: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    一批样本的正变换

    由 dψ = m - n_q 与 d*Δ^{-1} = Δ^{-1}d* 得 ψ + d*Δ^{-1}n_q = Δ^{-1}d*m，
    于是 φ = θ + 2πΔ^{-1}d*m 对 m 线性，不需要逐个样本构造 n_q。

    Returns:
        (φ 数组 (k, |V|), q 数组 (k, |F|))
    """
    thetas = np.atleast_2d(thetas)
    ms = np.atleast_2d(ms)
    source = -(d_matrix(g, 0).T @ ms.T.astype(float))
    potential = get_solver(g, 0).solve(source)
    return thetas + TWO_PI * potential.T, charges_from_m(g, ms)


def _lifted_theta(pair: DecoupledPair) -> Tuple[np.ndarray, Form]:
    n_q = integer_primitive(pair.q)
    return pair.phi.values - _charge_correction(n_q).values, n_q


def recouple(pair: DecoupledPair) -> VillainState:
    """(φ, q) ↦ (θ, m)，m 取 floor 形式 n_q + d⌊θ̃/2π⌋"""
    g = pair.geometry
    lifted, n_q = _lifted_theta(pair)
    windings = np.floor(lifted / TWO_PI)
    theta = lifted - TWO_PI * windings
    # 浮点取模可能落在 2π 上
    theta[theta >= TWO_PI] = 0.0
    theta[g.root_vertex] = 0.0
    winding_form = Form.rooted(g, 0, windings.astype(np.int64))
    m = n_q + d(winding_form)
    return VillainState(Form(0, theta, g), m)


def recouple_gradient_form(pair: DecoupledPair) -> Form:
    """m 的梯度形式 n_q + (dθ̃ - dθ)/2π，应与 floor 形式逐边相等"""
    g = pair.geometry
    lifted, n_q = _lifted_theta(pair)
    theta = np.mod(lifted, TWO_PI)
    jump = (g.d0_matrix @ lifted - g.d0_matrix @ theta) / TWO_PI
    return Form(1, n_q.values + np.round(jump).astype(np.int64), g)


def villain_energy(state: VillainState) -> float:
    """⟨dθ + 2πm, dθ + 2πm⟩"""
    grad = d(Form(0, state.theta.values.astype(float), state.geometry))
    field = grad.values + TWO_PI * state.m.values
    return float(np.dot(field, field))


def decoupled_energy(pair: DecoupledPair) -> float:
    """⟨dφ, dφ⟩ + (2π)^2⟨q, (-Δ)^{-1} q⟩"""
    grad = d(pair.phi)
    q = Form(2, pair.q.values.astype(float), pair.geometry)
    coulomb = -inner(q, solve_poisson(q))
    return inner(grad, grad) + TWO_PI_SQ * coulomb


def energy_identity_residual(state: VillainState) -> float:
    """|Villain 能量 - 解耦后能量|"""
    return abs(villain_energy(state) - decoupled_energy(decouple(state)))


def random_villain_state(g: LatticeGeometry, rng: np.random.Generator,
                         m_range: int = 2) -> VillainState:
    """θ 在 [0, 2π) 均匀、m 在 {-m_range..m_range} 均匀的任意状态（不是 Gibbs 样本）"""
    theta = Form.rooted(g, 0, rng.uniform(0.0, TWO_PI, g.num_vertices))
    m = Form(1, rng.integers(-m_range, m_range + 1, g.num_edges), g)
    return VillainState(theta, m)


# ----------------------------------------------------------------------
# 换根
# ----------------------------------------------------------------------
class RerootModel(str, Enum):
    GFF = "gff"
    IVGFF = "ivgff"
    COULOMB = "coulomb"
    VILLAIN = "villain"


State = Union[Form, IVState, CoulombState, VillainState]


def _new_geometry(g: LatticeGeometry, degree: int, new_root: Label) -> LatticeGeometry:
    if degree == 0:
        return with_roots(g, root_vertex=new_root, root_face=g.root_face)
    if degree == 2:
        return with_roots(g, root_vertex=g.root_vertex, root_face=new_root)
    raise InvalidParameterError("只能对顶点或面换根")


def _reroot_by_subtraction(f: Form, new_root: Label) -> Form:
    g = f.geometry
    g2 = _new_geometry(g, f.degree, new_root)
    root = g2.root_cell(f.degree)
    if root == g.root_cell(f.degree):
        return f
    return Form(f.degree, f.values - f.values[root], g2)


def _reroot_charges(q: Form, new_root: Label) -> Form:
    g = q.geometry
    g2 = _new_geometry(g, q.degree, new_root)
    old, new = g.root_cell(q.degree), g2.root_cell(q.degree)
    if old == new:
        return q
    values = q.values.copy()
    values[old] = -(int(values.sum()) - int(values[old]))
    values[new] = 0
    return Form(q.degree, values, g2)


def _reroot_villain(state: VillainState, new_root: Label) -> VillainState:
    g = state.geometry
    g2 = _new_geometry(g, 0, new_root)
    if g2.root_vertex == g.root_vertex:
        return state
    theta = state.theta.values.astype(float)
    shifted = np.mod(theta - theta[g2.root_vertex], TWO_PI)
    shifted[shifted >= TWO_PI] = 0.0
    shifted[g2.root_vertex] = 0.0
    jump = (g.d0_matrix @ theta - g.d0_matrix @ shifted) / TWO_PI
    m = state.m.values + np.round(jump).astype(np.int64)
    return VillainState(Form(0, shifted, g2), Form(1, m, g2))


def reroot(model: Union[RerootModel, str], state: State, new_root: Label) -> State:
    """
    把状态换到以 new_root 为根的几何上

    - GFF / IV-GFF：减去新根处的值
    - 库仑气体：旧根处放入 -Σ_{u≠v0} q(u)，新根处置零
    - Villain 耦合：θ' = θ - θ(v0') mod 2π，m 补偿使 dθ + 2πm 逐边不变

    new_root 与当前根相同时原样返回。
    """
    model = RerootModel(model)
    if model == RerootModel.GFF:
        if not isinstance(state, Form):
            raise InvalidParameterError("GFF 状态应为 Form")
        return _reroot_by_subtraction(state, new_root)
    if model == RerootModel.IVGFF:
        psi = state.psi if isinstance(state, IVState) else state
        return IVState(_reroot_by_subtraction(psi, new_root))
    if model == RerootModel.COULOMB:
        q = state.q if isinstance(state, CoulombState) else state
        return CoulombState(_reroot_charges(q, new_root))
    if not isinstance(state, VillainState):
        raise InvalidParameterError("Villain 换根需要 VillainState")
    return _reroot_villain(state, new_root)
