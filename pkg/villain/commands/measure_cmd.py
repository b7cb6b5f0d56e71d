"""measure 子命令：运行一个估计量并写出报告"""
import logging
from typing import Dict

import numpy as np

from ..utils import estimators
from ..utils.config_loader import RunConfig
from ..utils.errors import ConfigError
from .common import emit, geometry_from_config, header_for, parse_label

logger = logging.getLogger(__name__)

OBSERVABLES = ("potential_variance", "char_function", "two_point", "tilde_m",
               "gradient_window", "variance_identity", "laplace", "decoupling", "ivgff_max")


def _require(params: Dict, key: str):
    if key not in params:
        raise ConfigError(f"params.{key}", "缺少必需参数")
    return params[key]


def _face_weights(g, params: Dict) -> np.ndarray:
    weights = np.zeros(g.num_faces)
    weights[g.face_index(parse_label(_require(params, "face"), "params.face"))] = 1.0
    return weights


def run(config: RunConfig) -> int:
    params = config.params
    observable = params.get("observable", "potential_variance")
    if observable not in OBSERVABLES:
        raise ConfigError("params.observable", f"必须是 {', '.join(OBSERVABLES)} 之一")
    cfg = config.chain
    beta = config.beta

    if observable == "ivgff_max":
        n_list = [int(n) for n in params.get("n_list", [16, 32, 64])]
        alphas = [float(a) for a in params.get("alphas", [1.5, 2.0])]
        runs = {n: estimators.ivgff_run(n, beta, alphas, cfg) for n in n_list}
        table = estimators.ivgff_max_statistics(n_list, beta, cfg, alphas, runs)
        fit = estimators.ivgff_tail_fit(n_list, beta, cfg, alphas, runs)
        emit(config, "measure_ivgff_max", header_for(config), {"tail_fit": fit}, table)
        return 0

    g = geometry_from_config(config)
    if observable == "potential_variance":
        report = estimators.coulomb_potential_variance(g, _face_weights(g, params), beta, cfg)
        body = {**report.to_dict(), "effective_beta": estimators.effective_gff_temperature(report)}
    elif observable == "char_function":
        report = estimators.coulomb_char_function(
            g, parse_label(_require(params, "f1"), "params.f1"),
            parse_label(_require(params, "f2"), "params.f2"), beta, cfg)
        body = report.to_dict()
    elif observable == "two_point":
        report = estimators.villain_two_point(
            g, parse_label(_require(params, "v1"), "params.v1"),
            parse_label(_require(params, "v2"), "params.v2"), beta, cfg)
        body = {**report.to_dict(), "agreement_z": report.agreement_z()}
    elif observable == "tilde_m":
        body = estimators.tilde_M_estimator(g, int(_require(params, "edge")), beta, cfg).to_dict()
    elif observable == "gradient_window":
        centre = parse_label(params.get("center", [0, 0]), "params.center")
        body = estimators.gradient_window_probability(
            g, int(params.get("radius", 1)), float(_require(params, "eps")), beta, cfg,
            center=centre, edges=params.get("edges")).to_dict()
    elif observable == "variance_identity":
        body = estimators.variance_identity_check(g, _face_weights(g, params), beta, cfg)
    elif observable == "laplace":
        body = estimators.ivgff_laplace_transform(
            g, parse_label(_require(params, "vertex"), "params.vertex"),
            float(params.get("lam", 1.0)), beta, cfg).to_dict()
    else:
        stats = estimators.decoupling_statistics(g, beta, cfg)
        body = {k: v for k, v in stats.items() if k in ("n_samples", "cov_max_z", "corr_max_z")}

    emit(config, f"measure_{observable}", header_for(config, g), body)
    return 0
