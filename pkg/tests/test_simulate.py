import hashlib

import numpy as np
import pytest

from sempath.optimizer import OptimizerConfig
from sempath.ram import SampleMoments, build_ram, implied_moments
from sempath.selection import PathConfig
from sempath.simulate import (GROWTH_NAMES, ReplicationReport, SimDesign, cfa_model,
                              replicate_once, replication_study, simulate_cfa, simulate_growth,
                              wald_pvalues)
from sempath.syntax import parse_model


@pytest.fixture(scope="module")
def big_growth():
    return simulate_growth(1_000_000, 2024, return_latent=True)


def test_covariates_are_iid_standard_normal(big_growth):
    X, _ = big_growth
    c = X[:, 4:]
    np.testing.assert_allclose(np.cov(c, rowvar=False), np.eye(10), atol=5e-3)


def test_null_covariate_has_no_effect(big_growth):
    X, latent = big_growth
    c = np.column_stack([np.ones(len(X)), X[:, 4:]])
    coef_i = np.linalg.lstsq(c, latent[:, 0], rcond=None)[0]
    coef_s = np.linalg.lstsq(c, latent[:, 1], rcond=None)[0]
    assert abs(coef_i[3]) < 5e-3 and abs(coef_s[3]) < 5e-3
    np.testing.assert_allclose(coef_i[1:3], [1.0, 0.2], atol=5e-3)
    np.testing.assert_allclose(coef_s[1:3], [1.0, 0.2], atol=5e-3)


def test_linear_growth_identity(big_growth):
    X, latent = big_growth
    assert np.mean(X[:, 3] - X[:, 0]) == pytest.approx(3 * np.mean(latent[:, 1]), abs=5e-3)
    # x_t - i - t*s is pure measurement error with unit variance
    e = X[:, 2] - latent[:, 0] - 2 * latent[:, 1]
    assert np.var(e) == pytest.approx(1.0, abs=5e-3)


def test_cfa_matches_implied_moments():
    lam = (0.8, 0.7, 0.6, 0.0, 0.0)
    names = [f"y{k}" for k in range(1, 6)]
    X = simulate_cfa(1_000_000, lam, 8)
    data = SampleMoments.from_data(X, names)
    ram = build_ram(parse_model(cfa_model(5)), names)
    th = np.zeros(ram.q)
    for k, v in enumerate(lam):
        th[ram.labels.index(f"f1 -> y{k + 1}")] = v
        th[ram.labels.index(f"y{k + 1} ~~ y{k + 1}")] = 1 - v ** 2
    sigma, _ = implied_moments(ram, th)
    np.testing.assert_allclose(data.cov, sigma, atol=5e-3)
    # zero-loading indicators are uncorrelated with everything in the population
    assert np.all(sigma[3, [0, 1, 2, 4]] == 0.0)


def test_seed_determinism():
    def digest(a):
        return hashlib.sha256(a.tobytes()).hexdigest()
    assert digest(simulate_growth(100, 5)) == digest(simulate_growth(100, 5))
    assert digest(simulate_cfa(100, (0.5, 0.5), 5)) == digest(simulate_cfa(100, (0.5, 0.5), 5))
    assert digest(simulate_growth(100, 5)) != digest(simulate_growth(100, 6))


def test_wald_pvalues_large_effects_significant():
    X = simulate_growth(1000, 1)
    data = SampleMoments.from_data(X, GROWTH_NAMES)
    from sempath.simulate import GROWTH_MODEL
    from sempath.optimizer import fit_penalized
    from sempath.penalties import PenaltyConfig
    ram = build_ram(parse_model(GROWTH_MODEL, growth=True), GROWTH_NAMES, data)
    ml = fit_penalized(ram, data, PenaltyConfig("none"))
    p = wald_pvalues(ram, ml.theta, data)
    lab = dict(zip(ram.labels, p))
    assert lab["c1 -> i"] < 1e-10 and lab["c1 -> s"] < 1e-10
    assert np.all((p >= 0) & (p <= 1))


@pytest.fixture(scope="module")
def one_rep():
    return replicate_once(120, np.random.SeedSequence(4), ("ml", "lasso", "alasso", "scad", "mcp"),
                          PathConfig(n_lambda=15, jump=None), OptimizerConfig())


def test_bookkeeping_16_nulls_4_effects(one_rep):
    for method, counts in one_rep.items():
        assert counts is not None, method
        fp, tn, fn, tp = counts
        assert fp + tn == 16 and fn + tp == 4


def test_replication_report_deterministic():
    design = SimDesign(N=100, n_reps=2, seed=3)
    path = PathConfig(n_lambda=10, jump=None)
    a = replication_study(design, ("ml", "lasso"), path)
    b = replication_study(design, ("ml", "lasso"), path)
    assert list(a.rows()) == list(b.rows())
    for row in a.rows():
        for key in ("false_positive_rate", "false_negative_rate", "convergence_rate"):
            assert 0.0 <= row[key] <= 1.0
        assert row["false_pos"] + row["true_neg"] == 16 * 2
    assert "False Positives" in a.table() and "False Negatives" in a.table()


def test_rates_exclude_nonconverged():
    rep = ReplicationReport(N=80, methods=("m",), false_pos={"m": 2}, true_neg={"m": 30},
                            false_neg={"m": 1}, true_pos={"m": 7}, n_converged={"m": 2}, n_reps=3)
    assert rep.fp_rate("m") == 2 / 32 and rep.fn_rate("m") == 1 / 8
    assert rep.convergence_rate("m") == pytest.approx(2 / 3)


@pytest.mark.parametrize("bad", [dict(N=5), dict(n_reps=0), dict(model_kind="arima")])
def test_design_validation(bad):
    with pytest.raises(ValueError):
        SimDesign(**bad)
