"""Acceptance gate: one test per criterion, one PASS/FAIL line each in the summary."""
import time

import numpy as np
import pytest
from scipy.optimize import minimize

from sempath.cli import penalty_curves
from sempath.optimizer import CONVERGED, OptimizerConfig, fit_penalized, multi_start_fit
from sempath.penalties import PenaltyConfig, penalty_value, prox
from sempath.ram import SampleMoments, build_ram, implied_moments, ml_discrepancy, ml_gradient
from sempath.selection import PathConfig, bic, effective_df, model_df, rmsea, run_path
from sempath.simulate import SimDesign, cfa_model, replication_study, simulate_cfa
from sempath.syntax import parse_model

from conftest import (CFA_LOADINGS, CFA_NAMES, make_cfa, make_growth, make_two,
                      random_admissible, record)
from oracles import grid_prox

KINDS6 = ("lasso", "ridge", "enet", "alasso", "scad", "mcp")


def test_1_prox_oracle():
    t0 = time.perf_counter()
    worst = {}
    for kind in KINDS6:
        rng = np.random.default_rng(1000 + KINDS6.index(kind))
        err = 0.0
        for _ in range(1000):
            z, lam, step = rng.normal(0, 2.5), rng.uniform(0.01, 2), rng.uniform(0.05, 2)
            alpha, w = rng.uniform(0, 1), rng.uniform(0.1, 5)
            gamma = rng.uniform(2.05, 6) if kind == "scad" else rng.uniform(0.3, 6)
            cfg = PenaltyConfig(kind, lam, alpha, gamma, pars_pen=(1,),
                                weights=np.array([w]) if kind == "alasso" else None)
            got = prox(z, step * lam, cfg, 1)
            ref, fref, obj = grid_prox(z, step, kind, lam, alpha, gamma, w)
            d = abs(got - ref)
            if d >= 2e-3 and obj(got) <= fref + 1e-12:
                d = 0.0     # tie between separated global minimizers
            err = max(err, d)
        worst[kind] = err
    elapsed = time.perf_counter() - t0
    ok = max(worst.values()) < 2e-3 and elapsed < 30
    record("1 prox oracle", ok, f"max err {max(worst.values()):.2e}, {elapsed:.1f}s")
    assert ok, (worst, elapsed)


def test_2_gradient_finite_differences():
    t0 = time.perf_counter()
    worst = 0.0
    h = 1e-6
    for maker in (make_two, make_cfa, make_growth):
        ram, data = maker()
        rng = np.random.default_rng(2)
        for _ in range(100):
            th = random_admissible(ram, rng)
            g = ml_gradient(ram, th, data)
            fd = np.empty(ram.q)
            for k in range(ram.q):
                e = np.zeros(ram.q)
                e[k] = h
                fd[k] = (ml_discrepancy(ram, th + e, data) - ml_discrepancy(ram, th - e, data)) / (2 * h)
            worst = max(worst, np.max(np.abs(g - fd)) / max(1.0, np.max(np.abs(fd))))
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-5 and elapsed < 60
    record("2 gradient vs finite differences", ok, f"max rel err {worst:.2e}, {elapsed:.1f}s")
    assert ok


def test_3_lambda_zero_is_mle():
    ram, data = make_cfa()

    def f(th):
        v = ml_discrepancy(ram, th, data)
        return v if np.isfinite(v) else 1e10
    ref = minimize(f, ram.start, method="BFGS", options={"gtol": 1e-10, "maxiter": 10000})
    ref = minimize(f, ref.x, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-14, "maxiter": 40000, "maxfev": 40000})
    res = fit_penalized(ram, data, PenaltyConfig("lasso", 0.0, pars_pen=range(1, 8)))
    x = ref.x.copy()
    if np.sign(x[0]) != np.sign(res.theta[0]):
        x[:7] *= -1     # loading sign is not identified
    dpar = np.max(np.abs(res.theta - x))
    dfun = abs(res.f_ml - ref.fun)
    ok = res.conv == CONVERGED and dpar < 1e-4 and dfun < 1e-6
    record("3 lambda=0 equals MLE", ok, f"max |dtheta| {dpar:.1e}, |dF| {dfun:.1e}")
    assert ok


def test_4_shrink_to_zero():
    ram, data = make_cfa()
    res = run_path(ram, data, PenaltyConfig("lasso", 0.0, pars_pen=range(1, 8)),
                   PathConfig(n_lambda=23, jump=0.05))
    k0 = res.fits[0]["effective_df"]
    hits = [r["lambda"] for r, p in zip(res.fits, res.parameters)
            if np.all(p[:7] == 0.0) and k0 - r["effective_df"] == 7]
    ok = bool(hits)
    record("4 shrink to zero", ok, f"all 7 loadings zero from lambda {min(hits) if hits else None}")
    assert ok


def test_5_cfa_selection():
    t0 = time.perf_counter()
    spec = parse_model(cfa_model(7))
    pen = PenaltyConfig("lasso", 0.0, pars_pen=range(1, 8))
    good = 0
    for seed in np.random.SeedSequence(5).spawn(50):
        data = SampleMoments.from_data(simulate_cfa(250, CFA_LOADINGS, seed), CFA_NAMES)
        ram = build_ram(spec, CFA_NAMES, data)
        est = run_path(ram, data, pen, PathConfig(n_lambda=23, jump=0.05)).final_pars[:7]
        good += bool(np.all(est[5:] == 0.0) and np.all(est[:5] != 0.0))
    elapsed = time.perf_counter() - t0
    ok = good / 50 >= 0.8 and elapsed < 300
    record("5 CFA BIC-lasso selection", ok, f"{good}/50 correct ({good / 50:.0%}), {elapsed:.0f}s")
    assert ok


@pytest.fixture(scope="module")
def replication_runs():
    methods = ("ml", "lasso", "alasso", "scad", "mcp")
    path = PathConfig(n_lambda=40, jump=None)
    return {N: replication_study(SimDesign(N=N, n_reps=50, seed=2), methods, path)
            for N in (80, 1000)}


def test_6_replication_directional(replication_runs):
    r80, r1000 = replication_runs[80], replication_runs[1000]
    a = r80.fp_rate("alasso") < r80.fp_rate("ml")
    b = 0.02 <= r1000.fp_rate("ml") <= 0.09
    c = r1000.fn_rate("lasso") <= 0.02 and r1000.fn_rate("ml") <= 0.02
    d = all(r1000.fp_rate(m) <= r80.fp_rate(m) for m in ("lasso", "alasso", "scad"))
    conv = min(r.convergence_rate(m) for r in (r80, r1000) for m in r.methods)
    print("\n" + r80.table() + "\n" + r1000.table())
    record("6a alasso FP < ML FP at N=80", a,
           f"{r80.fp_rate('alasso'):.3f} vs {r80.fp_rate('ml'):.3f}")
    record("6b ML FP at N=1000 in [0.02, 0.09]", b, f"{r1000.fp_rate('ml'):.3f}")
    record("6c lasso/ML FN at N=1000 <= 0.02", c,
           f"lasso {r1000.fn_rate('lasso'):.3f}, ml {r1000.fn_rate('ml'):.3f}")
    record("6d FP(1000) <= FP(80) per method", d, "; ".join(
        f"{m} {r80.fp_rate(m):.3f}->{r1000.fp_rate(m):.3f}"
        for m in ("lasso", "alasso", "scad", "mcp")) + f"; min convergence {conv:.2f}")
    assert a and b and c and d


def test_7_invariants():
    rng = np.random.default_rng(7)
    checks = {}
    # prox identities, symmetry, shrinkage, enet limits, SCAD/MCP unbiasedness
    ok = True
    for kind in KINDS6:
        for _ in range(300):
            z, lam, step, g = rng.normal(0, 3), rng.uniform(0.01, 2), rng.uniform(0, 3), rng.uniform(2.1, 6)
            cfg = PenaltyConfig(kind, lam, 0.5, g, pars_pen=(1,),
                                weights=np.array([rng.uniform(0.1, 3)]) if kind == "alasso" else None)
            p = prox(z, step * lam, cfg, 1)
            ok &= prox(z, 0.0, cfg, 1) == z and prox(-z, step * lam, cfg, 1) == -p and abs(p) <= abs(z)
            if kind in ("scad", "mcp") and abs(z) > g * lam and (kind == "mcp" or g > 1 + step):
                ok &= p == z
            if kind == "enet":
                l1 = prox(z, step * lam, PenaltyConfig("enet", lam, 1.0, pars_pen=(1,)))
                l0 = prox(z, step * lam, PenaltyConfig("enet", lam, 0.0, pars_pen=(1,)))
                ok &= abs(l1 - prox(z, step * lam, PenaltyConfig("lasso", lam, pars_pen=(1,)))) <= 1e-12
                ok &= abs(l0 - prox(z, step * lam, PenaltyConfig("ridge", lam, pars_pen=(1,)))) <= 1e-12
    checks["prox"] = ok
    # Sigma symmetry
    ram, data = make_growth()
    checks["sigma symmetric"] = all(
        np.max(np.abs(s - s.T)) == 0 for s in
        (implied_moments(ram, random_admissible(ram, rng))[0] for _ in range(50)))
    # monotone descent, fixed point, f_regsem bookkeeping
    ok = True
    idx = ram.ids(kind="regression")
    for method in ("grad", "qn"):
        for kind in ("lasso", "scad", "mcp"):
            pen = PenaltyConfig(kind, 0.05, pars_pen=idx)
            trace = []
            res = fit_penalized(ram, data, pen, OptimizerConfig(method=method), trace=trace)
            ok &= res.conv == CONVERGED and bool(np.all(np.diff(trace) <= 0))
            ok &= res.f_regsem == res.f_ml + penalty_value(res.theta, pen)
            ok &= res.residual < 1e-5
            ok &= bool(np.all(res.theta[np.array(ram.variance_ids) - 1] >= 1e-4))
    checks["descent/fixed point/floor"] = ok
    # determinism
    pen = PenaltyConfig("mcp", 0.05, pars_pen=idx)
    opt = OptimizerConfig(n_starts=3, seed=11)
    a, b = multi_start_fit(ram, data, pen, opt), multi_start_fit(ram, data, pen, opt)
    checks["determinism"] = a.theta.tobytes() == b.theta.tobytes() and a.f_regsem == b.f_regsem
    # df bookkeeping
    cram, cdata = make_cfa()
    res = run_path(cram, cdata, PenaltyConfig("lasso", 0.0, pars_pen=range(1, 8)),
                   PathConfig(n_lambda=23, jump=0.05))
    ok = res.fits[-1]["effective_df"] == cram.q - 7
    for row, th in zip(res.fits, res.parameters):
        k = row["effective_df"]
        ok &= k == cram.q - int(np.sum(th[:7] == 0.0))
        ok &= row["bic"] == bic(row["f_ml"], cdata.n, k)
        ok &= row["rmsea"] == rmsea(row["f_ml"], cdata.n, model_df(cram, k))
        ok &= k == effective_df(th, cram, PenaltyConfig("lasso", 1.0, pars_pen=range(1, 8)))
    conv_rows = [i for i, r in enumerate(res.fits) if r["conv"] == CONVERGED]
    ok &= res.final_index == min(conv_rows, key=lambda i: res.fits[i]["bic"])
    checks["df bookkeeping"] = ok
    allok = all(checks.values())
    record("7 invariant suite", allok, ", ".join(f"{k}={'ok' if v else 'FAIL'}" for k, v in checks.items()))
    assert allok, checks


def test_8_penalty_curves():
    lam, gamma = 0.5, 3.7
    c = penalty_curves(lam, gamma, 0.5, -4, 4, 801)
    th = c["theta"]
    a = np.abs(th)
    lasso_lin = np.allclose(c["lasso"], lam * a, atol=1e-12)
    ridge_quad = np.allclose(c["ridge"], lam * th ** 2, atol=1e-12)
    far = a >= gamma * lam
    flat = (np.ptp(c["scad"][far]) < 1e-12 and np.ptp(c["mcp"][far]) < 1e-12)
    order = bool(np.all(c["mcp"][a > 1.0] <= c["scad"][a > 1.0] + 1e-12))
    # lasso keeps growing where SCAD and MCP have flattened
    grows = c["lasso"][far].max() > c["scad"][far].max()
    ok = lasso_lin and ridge_quad and flat and order and grows
    record("8 penalty curves", ok, f"lasso linear {lasso_lin}, ridge quadratic {ridge_quad}, "
                                   f"SCAD/MCP flat beyond {gamma * lam:g} {flat}, MCP<=SCAD {order}")
    assert ok
