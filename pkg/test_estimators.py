"""
测试误差分析与 Monte Carlo 估计量
"""
import math

import numpy as np
import pandas as pd
import pytest
from scipy import signal

from villain.utils.calculus import Form, solve_poisson
from villain.utils.errors import InvalidParameterError
from villain.utils.estimators import (EstimateReport, batch_means,
                                      coulomb_char_function,
                                      coulomb_potential_variance,
                                      decoupling_statistics,
                                      effective_gff_temperature, exact_report,
                                      gradient_window_probability,
                                      integrated_autocorr_time,
                                      ivgff_max_statistics, ivgff_tail_fit,
                                      make_variance_report, max_threshold,
                                      run_chains, sampler_benchmark,
                                      site_threshold, tilde_M_estimator,
                                      variance_identity_check,
                                      villain_two_point)
from villain.utils.lattice import build_lattice
from villain.utils.oracle import exact_coulomb_law
from villain.utils.samplers import ChainConfig


def _normal_series(rng, size):
    return rng.normal(size=size)


# ----------------------------------------------------------------------
# 误差分析
# ----------------------------------------------------------------------
def test_batch_means_iid():
    x = np.random.default_rng(0).normal(size=64_000)
    mean, stderr = batch_means(x)
    assert abs(mean) < 5 * stderr
    assert stderr == pytest.approx(1 / math.sqrt(len(x)), rel=0.35)
    with pytest.raises(InvalidParameterError):
        batch_means(x, n_batches=8)
    with pytest.raises(InvalidParameterError):
        batch_means(x[:10])


def test_autocorr_time():
    rng = np.random.default_rng(1)
    assert integrated_autocorr_time(rng.normal(size=50_000)) == pytest.approx(1.0, abs=0.15)
    assert integrated_autocorr_time(np.ones(100)) == 1.0
    # AR(1)：τ = (1 + φ)/(1 - φ)
    phi = 0.8
    ar = signal.lfilter([1.0], [1.0, -phi], rng.normal(size=200_000))
    assert integrated_autocorr_time(ar) == pytest.approx((1 + phi) / (1 - phi), rel=0.15)


def test_batch_means_sees_correlation():
    rng = np.random.default_rng(2)
    ar = signal.lfilter([1.0], [1.0, -0.9], rng.normal(size=128_000))
    _, stderr = batch_means(ar)
    naive = ar.std() / math.sqrt(len(ar))
    assert stderr > 2.5 * naive


def test_report_helpers():
    cfg = ChainConfig(seed=4)
    report = exact_report(0.0, cfg, {"green_norm": 1.0})
    assert report.stderr == 0.0
    assert report.z_score(0.0) == 0.0
    assert report.z_score(1.0) == -math.inf
    assert effective_gff_temperature(report) == math.inf
    assert report.to_dict()["config_hash"] == cfg.config_hash()
    other = EstimateReport(1.0, 0.5, 10, 1.0, 0, "x")
    assert other.z_score(0.0) == pytest.approx(2.0)


def test_variance_report():
    rng = np.random.default_rng(3)
    chains = [rng.normal(0.0, 2.0, 20_000) for _ in range(2)]
    report = make_variance_report(chains, ChainConfig(chains=2))
    assert report.value == pytest.approx(4.0, rel=0.05)
    assert report.n_samples == 40_000


def test_run_chains_is_deterministic():
    cfg = ChainConfig(seed=9, chains=3)
    a = run_chains(_normal_series, cfg, 5)
    b = run_chains(_normal_series, cfg, 5)
    assert len(a) == 3
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x, y)
    assert not np.array_equal(a[0], a[1])


# ----------------------------------------------------------------------
# 库仑气体与 Villain 模型
# ----------------------------------------------------------------------
def test_potential_variance_matches_exact(box2):
    beta = 0.3
    face = box2.free_cells(2)[0]
    w = Form.indicator(box2, 2, face)
    potential = solve_poisson(Form(2, w.values.astype(float), box2)).values
    law = exact_coulomb_law(box2, beta)
    exact = sum(p * float(np.dot(q, potential)) ** 2 for q, p in law.items())

    cfg = ChainConfig(seed=5, sweeps=20_000, burn_in=200, chains=2)
    report = coulomb_potential_variance(box2, w, beta, cfg)
    assert abs(report.value - exact) < 5 * report.stderr + 0.03 * exact
    # 精确方差满足下界，逐边改进界更紧
    assert exact >= report.extras["lower_bound"]
    assert report.extras["mtilde_min"] >= report.extras["M"] * (1 - 1e-6)
    assert report.extras["improved_bound"] >= report.extras["lower_bound"] - 5 * report.extras["improved_bound_stderr"]


def test_potential_variance_zero_weights(free1):
    report = coulomb_potential_variance(free1, np.zeros(free1.num_faces), 1.0, ChainConfig())
    assert report.value == 0.0
    assert report.n_samples == 0


def test_two_point_agreement(free1, quick_chain):
    report = villain_two_point(free1, (0, 0), (1, 0), 0.8, quick_chain)
    assert 0.0 < report.gff_factor < 1.0
    assert report.agreement_z() < 4.0
    assert report.improved_shape <= report.gff_factor
    same = villain_two_point(free1, (1, 0), (1, 0), 0.8, quick_chain)
    assert same.direct.value == 1.0


def test_tilde_m_is_above_m(free1, quick_chain):
    report = tilde_M_estimator(free1, 0, 0.6, quick_chain)
    assert report.value >= report.extras["M"] * (1 - 1e-6)
    assert report.tau_int >= 0
    with pytest.raises(InvalidParameterError):
        tilde_M_estimator(free1, free1.num_edges, 0.6, quick_chain)


def test_gradient_window(free1, quick_chain):
    everything = gradient_window_probability(free1, 1, math.pi + 0.1, 1.0, quick_chain)
    assert everything.value == 1.0
    assert everything.extras["edges"] == free1.num_edges
    narrow = gradient_window_probability(free1, 1, 0.05, 1.0, quick_chain)
    assert narrow.value < 0.05
    with pytest.raises(InvalidParameterError):
        gradient_window_probability(free1, 1, 0.0, 1.0, quick_chain)
    with pytest.raises(InvalidParameterError):
        gradient_window_probability(free1, 0, 0.5, 1.0, quick_chain)


@pytest.mark.slow
def test_decoupled_samples_are_gff(free1):
    cfg = ChainConfig(seed=12, sweeps=40_000, burn_in=500, thinning=4, chains=2)
    stats = decoupling_statistics(free1, 1.2, cfg)
    assert stats["n_samples"] == 20_000
    assert stats["cov_max_z"] < 5.0
    assert stats["corr_max_z"] < 5.0


@pytest.mark.slow
def test_variance_identity(box2):
    face = box2.free_cells(2)[0]
    w = np.zeros(box2.num_faces)
    w[face] = 1.0
    cfg = ChainConfig(seed=13, sweeps=40_000, burn_in=500, chains=2)
    result = variance_identity_check(box2, w, 0.7, cfg)
    assert abs(result["z"]) < 4.0
    assert result["iv_var"] <= result["iv_bound"] + 4 * result["iv_stderr"]


# ----------------------------------------------------------------------
# IV-GFF 最大值
# ----------------------------------------------------------------------
def test_thresholds_grow_with_n():
    assert max_threshold(8, 1.0) < max_threshold(16, 1.0)
    assert site_threshold(8, 1.0, 2.0) == pytest.approx(2 * site_threshold(8, 1.0, 1.0))


def _synthetic_runs(n_list, rows=10_000):
    runs = {}
    for n in n_list:
        hits = int(round(0.5 * (4.0 / n) ** 2.5 * rows))
        tail = np.zeros(rows)
        tail[:hits] = 1.0
        maxima = np.full(rows, float(n))
        runs[n] = np.column_stack([maxima, tail, np.zeros(rows)])
    return runs


def test_tail_fit_on_synthetic_runs():
    n_list = [4, 8, 16, 32]
    runs = _synthetic_runs(n_list)
    fit = ivgff_tail_fit(n_list, 1.0, ChainConfig(), alphas=(2.0, 3.0), runs=runs)
    assert isinstance(fit, pd.DataFrame)
    decaying, empty = fit.iloc[0], fit.iloc[1]
    assert decaying["slope"] == pytest.approx(-2.5, abs=0.05)
    assert decaying["compatible"]
    assert decaying["target_slope"] == -2.0
    assert empty["compatible"] is None
    assert math.isnan(empty["slope"])


def test_max_statistics_on_synthetic_runs():
    n_list = [4, 8]
    table = ivgff_max_statistics(n_list, 1.0, ChainConfig(), alphas=(2.0, 3.0),
                                 runs=_synthetic_runs(n_list))
    assert list(table["n"]) == n_list
    assert table["threshold"].iloc[0] == pytest.approx(max_threshold(4, 1.0))
    assert (table["max_mean"] == table["n"]).all()


def test_sampler_benchmark(free1):
    cfg = ChainConfig(seed=1, sweeps=4096, burn_in=50)
    table = sampler_benchmark(free1, 0.5, cfg)
    assert list(table["sampler"]) == ["local", "metropolis"]
    assert (table["n_samples"] == 4096).all()
    assert (table["seconds"] >= 0).all()
    local, metropolis = table.iloc[0], table.iloc[1]
    # 两个采样器的目标分布相同
    combined = math.hypot(local["stderr"], metropolis["stderr"])
    assert abs(local["mean"] - metropolis["mean"]) < 4 * combined + 1e-12


@pytest.mark.slow
def test_benchmark_cost_per_move():
    # 预热 numba 编译，避免计入第一次计时
    sampler_benchmark(build_lattice(2, "free"), 0.5, ChainConfig(seed=2, sweeps=64, burn_in=4))
    cfg = ChainConfig(seed=2, sweeps=256, burn_in=16)
    costs = {n: sampler_benchmark(build_lattice(n, "free"), 0.5, cfg).set_index("sampler")
             ["seconds_per_site_update"] for n in (8, 32)}
    # Metropolis 每步更新整列 Green 函数（约 |F| 次运算），局部热浴每步只碰邻点
    metropolis_growth = costs[32]["metropolis"] / costs[8]["metropolis"]
    local_growth = costs[32]["local"] / costs[8]["local"]
    assert metropolis_growth > 3.0
    assert local_growth < 3.0
    assert metropolis_growth > 2 * local_growth


# ----------------------------------------------------------------------
# 中等规模的测量
# ----------------------------------------------------------------------
@pytest.mark.slow
def test_potential_variance_above_lower_bound():
    g = build_lattice(16, "free")
    w = Form.indicator(g, 2, (0.5, 0.5))
    cfg = ChainConfig(seed=42, sweeps=20_000, thinning=4, chains=2)
    report = coulomb_potential_variance(g, w, 0.4, cfg)
    assert report.value - 3 * report.stderr >= report.extras["lower_bound"]
    assert report.extras["lower_bound"] > 0


@pytest.mark.slow
def test_char_function_decays_between_adjacent_faces():
    g = build_lattice(16, "free")
    cfg = ChainConfig(seed=43, sweeps=20_000, thinning=4, chains=2)
    report = coulomb_char_function(g, (0.5, 0.5), (1.5, 0.5), 0.4, cfg)
    assert abs(report.value) < 1 - 3 * report.stderr
    assert 0.0 < report.extras["bound_shape"] < 1.0


@pytest.mark.slow
def test_ivgff_max_grows_with_n():
    n_list = [16, 32, 64]
    cfg = ChainConfig(seed=44, sweeps=20_000, thinning=100, chains=2)
    table = ivgff_max_statistics(n_list, 2.0, cfg)
    assert (table["samples"] >= 200).all()
    assert (table["max_min"] >= 0).all()
    assert table["max_mean"].is_monotonic_increasing
    freq, err = table["exceed_freq"].to_numpy(), table["exceed_stderr"].to_numpy()
    for i in range(len(n_list) - 1):
        assert freq[i + 1] <= freq[i] + 3 * math.hypot(err[i], err[i + 1])
