"""
测试解耦双射、能量恒等式与换根映射
"""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from villain.utils.calculus import Form, d, green_matrix, inner
from villain.utils.errors import InvalidParameterError
from villain.utils.ig_dist import TWO_PI
from villain.utils.lattice import build_lattice, with_roots
from villain.utils.oracle import exact_coulomb_law, exact_iv_law, villain_joint_law
from villain.utils.samplers import CoulombState, IVState, VillainState
from villain.utils.transforms import (DecoupledPair, RerootModel, decouple,
                                      decouple_batch, decoupled_energy,
                                      energy_identity_residual,
                                      random_villain_state, recouple,
                                      recouple_gradient_form, reroot,
                                      villain_energy)

seeds = st.integers(min_value=0, max_value=2**32 - 1)
bcs = st.sampled_from(["free", "zero"])


@given(seeds, bcs)
def test_round_trip(seed, bc):
    g = build_lattice(2, bc)
    state = random_villain_state(g, np.random.default_rng(seed))
    back = recouple(decouple(state))
    np.testing.assert_array_equal(back.m.values, state.m.values)
    np.testing.assert_allclose(back.theta.values, state.theta.values, atol=1e-9)


@given(seeds, bcs)
def test_floor_and_gradient_forms_agree(seed, bc):
    g = build_lattice(2, bc)
    pair = decouple(random_villain_state(g, np.random.default_rng(seed), m_range=3))
    np.testing.assert_array_equal(recouple(pair).m.values, recouple_gradient_form(pair).values)


@given(seeds, bcs)
def test_energy_identity(seed, bc):
    g = build_lattice(2, bc)
    state = random_villain_state(g, np.random.default_rng(seed))
    assert energy_identity_residual(state) <= 1e-8 * max(villain_energy(state), 1.0)


def test_charges_are_dm(zero1):
    state = random_villain_state(zero1, np.random.default_rng(0))
    pair = decouple(state)
    np.testing.assert_array_equal(pair.q.values, d(state.m).values)
    assert pair.q.values[zero1.root_face] == 0


def test_zero_winding_keeps_theta(free1):
    # m = 0 时 q = 0，φ 就是 θ
    theta = Form.rooted(free1, 0, np.random.default_rng(1).uniform(0, TWO_PI, free1.num_vertices))
    state = VillainState(theta, Form.zeros(free1, 1, dtype=np.int64))
    pair = decouple(state)
    np.testing.assert_allclose(pair.phi.values, theta.values, atol=1e-12)
    assert not pair.q.values.any()


def test_pure_gradient_winding_shifts_phi(free1):
    rng = np.random.default_rng(5)
    theta = Form.rooted(free1, 0, rng.uniform(0, TWO_PI, free1.num_vertices))
    psi = Form.rooted(free1, 0, rng.integers(-2, 3, free1.num_vertices))
    state = VillainState(theta, d(psi))
    pair = decouple(state)
    np.testing.assert_allclose(pair.phi.values, theta.values + TWO_PI * psi.values, atol=1e-10)
    # 能量只剩 GFF 部分
    assert decoupled_energy(pair) == pytest.approx(inner(d(pair.phi), d(pair.phi)))


def test_decouple_batch_matches_single(zero1):
    rng = np.random.default_rng(3)
    states = [random_villain_state(zero1, rng) for _ in range(6)]
    thetas = np.stack([s.theta.values for s in states])
    ms = np.stack([s.m.values for s in states])
    phis, qs = decouple_batch(zero1, thetas, ms)
    for state, phi, q in zip(states, phis, qs):
        pair = decouple(state)
        np.testing.assert_allclose(phi, pair.phi.values, atol=1e-10)
        np.testing.assert_array_equal(q, pair.q.values)


def test_decoupled_pair_validation(free1, zero1):
    phi = Form.zeros(free1, 0)
    with pytest.raises(InvalidParameterError):
        DecoupledPair(phi, Form.zeros(free1, 2))  # q 不是整数
    with pytest.raises(InvalidParameterError):
        DecoupledPair(phi, Form.zeros(zero1, 2, dtype=np.int64))
    with pytest.raises(InvalidParameterError):
        DecoupledPair(Form.zeros(free1, 1), Form.zeros(free1, 2, dtype=np.int64))


# ----------------------------------------------------------------------
# 换根
# ----------------------------------------------------------------------
def test_reroot_gff_subtracts(free1):
    rng = np.random.default_rng(6)
    phi = Form.rooted(free1, 0, rng.normal(size=free1.num_vertices))
    moved = reroot("gff", phi, (1, 1))
    new_root = moved.geometry.root_vertex
    assert moved.values[new_root] == 0
    np.testing.assert_allclose(moved.values, phi.values - phi.values[new_root])
    # 梯度不变
    np.testing.assert_allclose(d(moved).values, d(phi).values)
    assert reroot(RerootModel.GFF, phi, (0, 0)) is phi


def test_reroot_ivgff(zero1):
    rng = np.random.default_rng(7)
    psi = Form.rooted(zero1, 0, rng.integers(-3, 4, zero1.num_vertices))
    moved = reroot("ivgff", IVState(psi), (0, 0))
    assert isinstance(moved, IVState)
    assert moved.psi.is_integer
    assert moved.psi.geometry.root_vertex == zero1.vertex_index((0, 0))
    np.testing.assert_array_equal(d(moved.psi).values, d(psi).values)


def test_reroot_coulomb(free1):
    rng = np.random.default_rng(8)
    q = Form.rooted(free1, 2, rng.integers(-2, 3, free1.num_faces))
    target = (0.5, 0.5)
    moved = reroot("coulomb", CoulombState(q), target)
    g2 = moved.q.geometry
    values = moved.q.values
    assert values[g2.root_face] == 0
    # 新根处的电荷移到旧根，总电荷变为 -q(新根)
    assert values.sum() == -q.values[g2.root_face]
    old = free1.root_face
    for f in range(free1.num_faces):
        if f not in (old, g2.root_face):
            assert values[f] == q.values[f]
    assert values[old] == -int(q.values.sum())


def test_reroot_villain_keeps_field(free1):
    rng = np.random.default_rng(9)
    state = random_villain_state(free1, rng)
    moved = reroot("villain", state, (-1, 1))
    g2 = moved.geometry
    assert moved.theta.values[g2.root_vertex] == 0
    assert np.all((moved.theta.values >= 0) & (moved.theta.values < TWO_PI))
    before = d(state.theta).values + TWO_PI * state.m.values
    after = d(moved.theta).values + TWO_PI * moved.m.values
    np.testing.assert_allclose(after, before, atol=1e-9)
    assert villain_energy(moved) == pytest.approx(villain_energy(state))


def test_reroot_errors(free1):
    with pytest.raises(InvalidParameterError):
        reroot("gff", IVState(Form.zeros(free1, 0, dtype=np.int64)), (1, 1))
    with pytest.raises(InvalidParameterError):
        reroot("villain", Form.zeros(free1, 0), (1, 1))
    with pytest.raises(ValueError):
        reroot("xy", Form.zeros(free1, 0), (1, 1))


# ----------------------------------------------------------------------
# 换根把精确分布推到新根的精确分布
# ----------------------------------------------------------------------
def _assert_laws_close(pushed, target, atol=1e-7):
    for key in set(pushed) | set(target):
        assert abs(pushed.get(key, 0.0) - target.get(key, 0.0)) < atol, key


def _push_law(law, to_state, from_state):
    pushed = {}
    for key, p in law.items():
        image = from_state(to_state(key))
        pushed[image] = pushed.get(image, 0.0) + p
    return pushed


def test_reroot_pushes_coulomb_law(free1):
    beta = 0.5
    target_face = (0.5, 0.5)
    law = exact_coulomb_law(free1, beta)
    pushed = _push_law(
        law,
        lambda key: reroot("coulomb", CoulombState(Form(2, np.array(key, dtype=np.int64), free1)), target_face),
        lambda state: tuple(state.q.values.tolist()))
    _assert_laws_close(pushed, exact_coulomb_law(with_roots(free1, root_face=target_face), beta))


def test_reroot_pushes_ivgff_law(box2):
    inv_temp = 1.0
    target = box2.vertex_label(int(box2.free_cells(0)[-1]))
    law = exact_iv_law(box2, inv_temp)
    pushed = _push_law(
        law,
        lambda key: reroot("ivgff", IVState(Form(0, np.array(key, dtype=np.int64), box2)), target),
        lambda state: tuple(state.psi.values.tolist()))
    _assert_laws_close(pushed, exact_iv_law(with_roots(box2, root_vertex=target), inv_temp))


def test_reroot_pushes_gff_covariance(free1):
    target = (1, 1)
    g2 = with_roots(free1, root_vertex=target)
    # 换根是线性映射 φ ↦ φ - φ(v0')·1
    shift = np.eye(free1.num_vertices)
    shift[:, g2.root_vertex] -= 1.0
    pushed = shift @ green_matrix(free1, 0) @ shift.T
    np.testing.assert_allclose(pushed, green_matrix(g2, 0), atol=1e-10)


def test_reroot_pushes_villain_joint_law(two_vertex):
    beta, bins = 1.0, 16
    free = int(two_vertex.free_cells(0)[0])
    g2 = with_roots(two_vertex, root_vertex=two_vertex.vertex_label(free))
    old_root = two_vertex.root_vertex

    def to_state(key):
        j, m = key
        theta = np.zeros(two_vertex.num_vertices)
        theta[free] = TWO_PI * (j + 0.5) / bins
        return reroot("villain", VillainState(Form(0, theta, two_vertex),
                                              Form(1, np.array([m], dtype=np.int64), two_vertex)),
                      two_vertex.vertex_label(free))

    def from_state(state):
        angle = state.theta.values[old_root]
        return int(angle / TWO_PI * bins), int(state.m.values[0])

    pushed = _push_law(villain_joint_law(two_vertex, beta, bins=bins), to_state, from_state)
    target = villain_joint_law(g2, beta, bins=bins)
    # m 的范围在换根后平移一格，只比较两边都覆盖的部分
    common = set(pushed) & set(target)
    assert sum(target[k] for k in common) > 1 - 1e-8
    for key in common:
        assert abs(pushed[key] - target[key]) < 1e-8, key
