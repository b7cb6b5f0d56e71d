"""
测试精确计算：配分函数、恒等式、转移公式与全变差距离
"""
import math

import numpy as np
import pytest

from villain.utils import oracle
from villain.utils.errors import InvalidParameterError, SizeGuardError
from villain.utils.ig_dist import TWO_PI
from villain.utils.lattice import build_lattice
from villain.utils.oracle import (OracleConfig, binned_total_variation,
                                  bound_checks, chessboard_beta0,
                                  choose_cutoff, determinant_identity,
                                  exact_coulomb_law, exact_iv_law,
                                  exact_model_law, exact_Z_coulomb,
                                  exact_Z_gff, exact_Z_iv, exact_Z_villain,
                                  free_energy_lower_bound, identity_suite,
                                  iv_coulomb_transfer_check,
                                  lattice_tail_certificate,
                                  partition_identities, total_variation,
                                  transfer_checks, villain_joint_law,
                                  villain_theta_marginal,
                                  villain_transfer_check)


def test_single_edge_villain_is_gaussian(two_vertex):
    # 周期化后对唯一的角积分就是整条实轴上的高斯积分
    for beta in (0.3, 1.0, 4.0):
        z = exact_Z_villain(two_vertex, beta)
        assert z.value == pytest.approx(math.sqrt(TWO_PI / beta), rel=1e-9)
        assert z.method == "quadrature"


def test_gff_partition_two_vertex(two_vertex):
    assert exact_Z_gff(two_vertex, 0, 2.0) == pytest.approx(0.5 * math.log(TWO_PI / 2.0))
    # 没有自由面
    assert exact_Z_gff(two_vertex, 2, 2.0) == 0.0
    assert exact_Z_coulomb(two_vertex, 1.0).value == 1.0
    with pytest.raises(InvalidParameterError):
        exact_Z_gff(two_vertex, 1, 1.0)
    with pytest.raises(InvalidParameterError):
        exact_Z_coulomb(two_vertex, 0.0)


@pytest.mark.parametrize("beta", [0.5, 0.8, 1.2])
def test_partition_identities(box2, beta):
    results = partition_identities(box2, beta)
    assert len(results) == 3
    for r in results:
        assert r["status"] == "pass", r


@pytest.mark.parametrize("bc", ["free", "zero"])
def test_determinant_identity(bc):
    assert determinant_identity(build_lattice(2, bc))["status"] == "pass"


def test_iv_methods_agree(box2):
    direct = exact_Z_iv(box2, 1.5, OracleConfig(iv_method="direct"), degree=0)
    dual = exact_Z_iv(box2, 1.5, OracleConfig(iv_method="poisson"), degree=0)
    assert direct.method == "direct"
    assert dual.method == "poisson"
    assert direct.value == pytest.approx(dual.value, rel=1e-7)


def test_iv_auto_falls_back(free1):
    with pytest.raises(SizeGuardError):
        exact_Z_iv(free1, 1.0, OracleConfig(iv_method="direct", max_configs=1000), degree=2)
    result = exact_Z_iv(free1, 1.0, OracleConfig(iv_method="auto", max_configs=200_000), degree=2)
    assert result.value > 1.0


def test_oracle_config_rejects_method():
    with pytest.raises(InvalidParameterError):
        OracleConfig(iv_method="guess")


def test_tail_certificate():
    assert lattice_tail_certificate(1.0, 0, 3) == 0.0
    values = [lattice_tail_certificate(0.5, 3, K) for K in range(1, 8)]
    assert all(a > b for a, b in zip(values, values[1:]))
    K, cert = choose_cutoff(2.0, 2, OracleConfig())
    assert cert < 1e-8
    assert lattice_tail_certificate(2.0, 2, K - 1) >= 1e-8


def test_cutoff_size_guard():
    with pytest.raises(SizeGuardError):
        choose_cutoff(0.01, 6, OracleConfig(max_configs=10_000))
    # 尾界收敛很慢时，盒子一超限就拒绝，不会先跑满半径上限
    with pytest.raises(SizeGuardError):
        choose_cutoff(1e-4, 1, OracleConfig(max_configs=50))
    with pytest.raises(SizeGuardError):
        choose_cutoff(1e-3, 4, OracleConfig())
    K, _ = choose_cutoff(1.0, 2, OracleConfig(k_max=4))
    assert K == 4


def test_laws_are_normalised(box2):
    coul = exact_coulomb_law(box2, 0.4)
    assert sum(coul.values()) == pytest.approx(1.0)
    assert all(len(k) == box2.num_faces for k in coul)
    # 电荷分布关于 q ↦ -q 对称
    free = box2.free_cells(2)[0]
    one = tuple(1 if i == free else 0 for i in range(box2.num_faces))
    minus = tuple(-1 if i == free else 0 for i in range(box2.num_faces))
    assert coul[one] == pytest.approx(coul[minus])

    iv = exact_iv_law(box2, 0.8)
    assert sum(iv.values()) == pytest.approx(1.0)
    assert max(iv, key=iv.get) == (0,) * box2.num_vertices


def test_theta_marginal_symmetry(two_vertex):
    probs = villain_theta_marginal(two_vertex, 1.0, vertex=1, bins=12)
    assert probs.sum() == pytest.approx(1.0)
    np.testing.assert_allclose(probs, probs[::-1], atol=1e-12)
    # 概率集中在 θ = 0 附近
    assert probs[0] > probs[6]
    with pytest.raises(InvalidParameterError):
        villain_theta_marginal(two_vertex, 1.0, vertex=0)


def test_joint_law(two_vertex, box2):
    law = villain_joint_law(two_vertex, 0.5, bins=8)
    assert sum(law.values()) == pytest.approx(1.0)
    assert law[(0, 0)] > law[(0, 1)]
    with pytest.raises(SizeGuardError):
        villain_joint_law(box2, 0.5)


def test_exact_model_law_dispatch(two_vertex):
    probs = exact_model_law("villain_theta", two_vertex, {"beta": 1.0, "vertex": 1, "bins": 8})
    assert len(probs) == 8
    with pytest.raises(InvalidParameterError):
        exact_model_law("xy", two_vertex, {})


def test_total_variation():
    law = {(0,): 0.5, (1,): 0.5}
    assert total_variation(law, np.array([[0], [1], [0], [1]])) == pytest.approx(0.0)
    assert total_variation(law, np.array([[0], [0]])) == pytest.approx(0.5)
    assert total_variation(law, np.array([[2], [2]])) == pytest.approx(1.0)
    probs = np.full(4, 0.25)
    angles = TWO_PI * (np.arange(4) + 0.5) / 4
    assert binned_total_variation(probs, angles) == pytest.approx(0.0)


def test_villain_transfer(box2):
    rng = np.random.default_rng(0)
    h = rng.normal(size=box2.num_edges)
    lhs, rhs = villain_transfer_check(box2, 0.7, h)
    assert lhs == pytest.approx(rhs, rel=1e-6)
    with pytest.raises(InvalidParameterError):
        villain_transfer_check(box2, 0.7, np.zeros(3))


def test_iv_coulomb_transfer(box2):
    w = np.zeros(box2.num_faces)
    w[box2.free_cells(2)] = 0.9
    lhs, rhs = iv_coulomb_transfer_check(box2, 0.7, w)
    assert lhs == pytest.approx(rhs, rel=1e-6)
    # w = 0 时两边都是 1
    assert iv_coulomb_transfer_check(box2, 0.7, np.zeros(box2.num_faces)) == pytest.approx((1.0, 1.0))


def test_transfer_checks_pass(box2):
    results = transfer_checks(box2, 0.9, np.random.default_rng(1), count=2)
    assert len(results) == 4
    assert all(r["status"] == "pass" for r in results)


@pytest.mark.parametrize("beta", [0.5, 1.0, 3.0])
def test_free_energy_lower_bound(box2, beta):
    result = free_energy_lower_bound(box2, 0, beta)
    assert result["holds"]
    assert result["integral"] > 0
    assert result["log_Z_iv"] >= result["log_bound"] - 1e-10


def test_bound_checks_pass():
    assert all(r["status"] == "pass" for r in bound_checks())


def test_chessboard_beta0():
    assert chessboard_beta0(0.5) == pytest.approx(48.0 * math.log(16.0))
    with pytest.raises(InvalidParameterError):
        chessboard_beta0(1.5)


def test_identity_suite(box2):
    results = identity_suite(box2, [0.8], seed=2)
    statuses = {r["status"] for r in results}
    assert statuses == {"pass"}
    names = [r["name"] for r in results]
    assert any(n.startswith("Z_vil = Z_gff * Z_coul") for n in names)
    assert "det(-Lap_0) = det(-Lap_2)" in names


def test_identity_suite_skips_large(box2, monkeypatch):
    def too_large(*args, **kwargs):
        raise SizeGuardError("枚举规模超过上限")

    monkeypatch.setattr(oracle, "free_energy_lower_bound", too_large)
    results = identity_suite(box2, [0.8])
    skipped = [r for r in results if r["status"] == "skipped"]
    assert len(skipped) == 1
    assert skipped[0]["reason"] == "枚举规模超过上限"
    assert all(r["status"] == "pass" for r in results if r["status"] != "skipped")
