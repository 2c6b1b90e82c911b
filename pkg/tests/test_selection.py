import math

import numpy as np
import pytest

from sempath.optimizer import CONVERGED, OptimizerConfig, fit_penalized
from sempath.penalties import PenaltyConfig, alasso_weights
from sempath.ram import SampleMoments
from sempath.selection import (PathConfig, PathError, bic, effective_df, fit_indices, holdout_eval,
                               lambda_max, model_df, rmsea, run_path, select_final, suggest_jump)
from sempath.simulate import simulate_cfa

from conftest import CFA_LOADINGS, CFA_NAMES, make_cfa


def cfa_path(ram, data, **kw):
    pen = PenaltyConfig("lasso", 0.0, pars_pen=ram.ids(kind="loading"))
    return run_path(ram, data, pen, PathConfig(n_lambda=23, jump=0.05, **kw))


@pytest.fixture(scope="module")
def path_result(cfa):
    return cfa_path(*cfa)


def true_cfa_theta(ram):
    th = np.zeros(ram.q)
    for k, lam in enumerate(CFA_LOADINGS):
        th[ram.labels.index(f"f1 -> y{k + 1}")] = lam
        th[ram.labels.index(f"y{k + 1} ~~ y{k + 1}")] = 1 - lam ** 2
    return th


def test_effective_df(cfa):
    ram, _ = cfa
    pen = PenaltyConfig("lasso", 0.1, pars_pen=range(1, 8))
    th = np.ones(ram.q)
    assert ram.q == 14
    assert effective_df(th, ram, pen) == 14
    th[[4, 6]] = 0.0
    assert effective_df(th, ram, pen) == 12
    th[:7] = 0.0
    assert effective_df(th, ram, pen) == 7
    th[:7] = 1e-9
    assert effective_df(th, ram, pen) == 7
    # unpenalized parameters always count
    th[7:] = 0.0
    assert effective_df(th, ram, pen) == 7


def test_bic_and_rmsea_examples():
    assert bic(0.0, 100, 0) == 0.0
    assert bic(0.3, 100, 10) - bic(0.3, 100, 5) == pytest.approx(math.log(100) * 5)
    assert rmsea(0.0, 250, 10) == 0.0
    assert rmsea(20 / 100, 101, 10) == pytest.approx(0.1)
    assert rmsea(0.5, 100, 0) == 0.0


def test_indices_reproducible_from_fit(path_result, cfa):
    ram, data = cfa
    for row in path_result.fits:
        k = row["effective_df"]
        assert row["bic"] == data.n * row["f_ml"] + math.log(data.n) * k
        assert row["rmsea"] == rmsea(row["f_ml"], data.n, model_df(ram, k))


def test_path_shape_and_summary(path_result):
    assert len(path_result.fits) == 23
    assert path_result.lambdas[0] == 0.0 and path_result.lambdas[-1] == pytest.approx(1.1)
    assert np.all(np.diff(path_result.lambdas) > 0)
    text = path_result.summary_text()
    assert "Number of parameters regularized: 7" in text
    assert "Lambda ranging from 0 to 1.1" in text
    assert "Number Converged: 23" in text
    assert path_result.parameters.shape == (23, 14)


def test_largest_lambda_zeroes_everything(path_result, cfa):
    ram, _ = cfa
    assert np.all(path_result.parameters[-1, :7] == 0.0)
    assert path_result.fits[-1]["effective_df"] == ram.q - 7


def test_final_index_is_argmin_over_converged(path_result):
    ok = [i for i, r in enumerate(path_result.fits) if r["conv"] == CONVERGED]
    best = min(ok, key=lambda i: path_result.fits[i]["bic"])
    assert path_result.final_index == best


def test_bic_curve_has_interior_minimum(path_result):
    b = [r["bic"] for r in path_result.fits]
    k = int(np.argmin(b))
    assert 0 < k < len(b) - 1


def test_selected_model_keeps_true_loadings(path_result):
    assert np.all(path_result.final_pars[:5] != 0.0)


@pytest.mark.parametrize("seed", range(6))
def test_warm_and_cold_paths_agree_within_a_basin(seed):
    ram, data = make_cfa(seed=seed)
    warm = cfa_path(ram, data)
    cold = cfa_path(ram, data, warm_start=False, n_jobs=2)
    same = 0
    for rw, rc, pw, pc in zip(warm.fits, cold.fits, warm.parameters, cold.parameters):
        if np.array_equal(pw[:7] == 0, pc[:7] == 0):
            assert abs(rw["f_regsem"] - rc["f_regsem"]) < 1e-3
            same += 1
        else:
            # the only other basin: all loadings zero, a local minimum for any lambda > 0
            assert np.all(pc[:7] == 0.0) and rc["conv"] == CONVERGED
    assert same >= 15


def test_single_lambda_is_mle(cfa):
    ram, data = cfa
    pen = PenaltyConfig("lasso", 0.0, pars_pen=range(1, 8))
    res = run_path(ram, data, pen, PathConfig(n_lambda=1))
    mle = fit_penalized(ram, data, PenaltyConfig("none"))
    assert len(res.fits) == 1 and res.final_index == 0
    np.testing.assert_allclose(res.final_pars, mle.theta, atol=1e-5)


def test_no_convergence_raises_with_table(cfa):
    ram, data = cfa
    pen = PenaltyConfig("lasso", 0.0, pars_pen=range(1, 8))
    with pytest.raises(PathError) as exc:
        run_path(ram, data, pen, PathConfig(n_lambda=3), OptimizerConfig(max_iter=1))
    assert len(exc.value.fits) == 3


def test_select_final_skips_nonconverged():
    fits = [{"conv": 1, "bic": 1.0}, {"conv": 0, "bic": 5.0}, {"conv": 0, "bic": 3.0}]
    assert select_final(fits, "bic") == 2


def test_zeroing_null_parameters_can_lower_rmsea():
    # find a seeded sample with misfit at the MLE, then constrain the null loadings to 0
    for seed in range(100):
        ram, data = make_cfa(N=250, seed=seed)
        full = fit_penalized(ram, data, PenaltyConfig("none"))
        r_full = fit_indices(full.f_ml, ram, data.n, ram.q)["rmsea"]
        if r_full > 0:
            break
    assert r_full > 0
    pen = PenaltyConfig("lasso", 1e6, pars_pen=(6, 7))
    zeroed = fit_penalized(ram, data, pen)
    k = effective_df(zeroed.theta, ram, pen)
    assert k == ram.q - 2
    assert zeroed.f_ml >= full.f_ml
    assert fit_indices(zeroed.f_ml, ram, data.n, k)["rmsea"] < r_full


def test_holdout_same_moments_identical(cfa):
    ram, data = cfa
    th = fit_penalized(ram, data, PenaltyConfig("none")).theta
    out = holdout_eval(ram, th, data)
    assert out["f_ml"] == fit_indices(out["f_ml"], ram, data.n, ram.q)["f_ml"]
    from sempath.ram import ml_discrepancy
    assert out["f_ml"] == ml_discrepancy(ram, th, data)


def test_holdout_overshrunk_is_worse(cfa, path_result):
    ram, _ = cfa
    hold = SampleMoments.from_data(simulate_cfa(2000, CFA_LOADINGS, 999), CFA_NAMES)
    f_best = holdout_eval(ram, path_result.final_pars, hold)["f_ml"]
    f_over = holdout_eval(ram, path_result.parameters[-1], hold)["f_ml"]
    assert f_over > f_best


def test_holdout_true_parameters_consistent(cfa):
    ram, _ = cfa
    hold = SampleMoments.from_data(simulate_cfa(100_000, CFA_LOADINGS, 42), CFA_NAMES)
    assert holdout_eval(ram, true_cfa_theta(ram), hold)["f_ml"] < 1e-3


def test_holdout_columns_and_test_selection(cfa):
    ram, data = cfa
    hold = SampleMoments.from_data(simulate_cfa(250, CFA_LOADINGS, 77), CFA_NAMES)
    pen = PenaltyConfig("lasso", 0.0, pars_pen=range(1, 8))
    res = run_path(ram, data, pen, PathConfig(n_lambda=10, jump=0.05, holdout=hold,
                                              select_on="test"))
    assert {"test_f_ml", "test_bic", "test_rmsea"} <= set(res.fits[0])
    assert res.final_index == int(np.argmin([r["test_bic"] for r in res.fits]))


@pytest.mark.parametrize("kind", ["lasso", "alasso", "scad", "mcp"])
def test_lambda_max_brackets_all_zero(growth, kind):
    ram, data = growth
    idx = ram.ids(kind="regression")
    ml = fit_penalized(ram, data, PenaltyConfig("none"))
    w = alasso_weights(ml, idx) if kind == "alasso" else None
    pen = PenaltyConfig(kind, 0.0, pars_pen=idx, weights=w)
    lmax = lambda_max(ram, data, pen, theta0=ml.theta)
    pidx = np.array(idx) - 1
    start = ml.theta.copy()
    start[pidx] = 0.0
    restricted = fit_penalized(ram, data, PenaltyConfig("lasso", 1e8, pars_pen=idx), theta0=start)
    # zero block is a fixed point above lambda_max and is left below it
    above = fit_penalized(ram, data, pen.with_lambda(lmax * 1.02), theta0=restricted.theta)
    below = fit_penalized(ram, data, pen.with_lambda(lmax * 0.9), theta0=restricted.theta)
    assert np.all(above.theta[pidx] == 0.0)
    assert np.any(below.theta[pidx] != 0.0)
    jump = suggest_jump(ram, data, pen, 40, ml_fit=ml)
    assert jump * 39 > lmax


def test_suggest_jump_refuses_symmetric_zero_block(cfa):
    ram, data = cfa
    pen = PenaltyConfig("lasso", 0.0, pars_pen=range(1, 8))
    assert lambda_max(ram, data, pen) == 0.0
    with pytest.raises(ValueError, match="stationary"):
        suggest_jump(ram, data, pen, 40)


def test_growth_bic_model_zeroes_most_null_effects(growth):
    ram, data = growth
    idx = ram.ids(kind="regression")
    pen = PenaltyConfig("lasso", 0.0, pars_pen=idx)
    jump = suggest_jump(ram, data, pen, 40)
    res = run_path(ram, data, pen, PathConfig(n_lambda=40, jump=jump))
    est = dict(zip(ram.labels, res.final_pars))
    null = [est[f"c{k} -> {lv}"] for k in range(3, 11) for lv in ("i", "s")]
    assert sum(v == 0.0 for v in null) >= 10
    assert est["c1 -> i"] != 0.0 and est["c1 -> s"] != 0.0


@pytest.mark.parametrize("bad", [dict(n_lambda=0), dict(jump=0.0), dict(lambda_start=-1.0),
                                 dict(metric="aic"), dict(select_on="test")])
def test_path_config_validation(bad):
    with pytest.raises(ValueError):
        PathConfig(**bad)


def test_grid_definition():
    np.testing.assert_allclose(PathConfig(n_lambda=4, jump=0.1, lambda_start=0.2).grid,
                               [0.2, 0.3, 0.4, 0.5])
