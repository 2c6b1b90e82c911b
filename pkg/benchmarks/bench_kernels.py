"""Compiled vs numpy kernels: F_ML + gradient, prox, and a full lasso path.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import time

import numpy as np

from sempath import kernels
from sempath.optimizer import OptimizerConfig
from sempath.penalties import PenaltyConfig
from sempath.ram import SampleMoments, _aligned, build_ram
from sempath.selection import PathConfig, run_path
from sempath.simulate import GROWTH_MODEL, GROWTH_NAMES, simulate_growth
from sempath.syntax import parse_model


def best_of(fn, repeat, number):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(number):
            fn()
        times.append((time.perf_counter() - t0) / number)
    return min(times)


def growth_fixture(N=200, seed=1):
    data = SampleMoments.from_data(simulate_growth(N, seed), GROWTH_NAMES)
    ram = build_ram(parse_model(GROWTH_MODEL, growth=True), GROWTH_NAMES, data)
    return ram, _aligned(ram, data)


def kernel_args(ram, data, theta):
    A, S, M = ram.matrices(theta)
    return (A, S, M, ram.n_obs, data.cov, data.mean, data.logdet,
            ram.cmat, ram.crow, ram.ccol, ram.cpid, ram.q)


def run_path_with(backend, ram, data):
    saved = kernels.ml_value_grad, kernels.prox_vec, kernels.penalty_value
    kernels.ml_value_grad = backend.ml_value_grad
    kernels.prox_vec = backend.prox_vec
    kernels.penalty_value = backend.penalty_value
    try:
        pen = PenaltyConfig("lasso", 0.0, pars_pen=ram.ids(kind="regression"))
        return run_path(ram, data, pen, PathConfig(n_lambda=40, jump=0.01),
                        OptimizerConfig(method="grad"))
    finally:
        kernels.ml_value_grad, kernels.prox_vec, kernels.penalty_value = saved


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    py = kernels.python_backend
    cy = kernels.compiled_backend
    if cy is None:
        print("compiled backend unavailable; build with pip install -e .")
        return
    ram, data = growth_fixture()
    theta = ram.start.copy()
    a = kernel_args(ram, data, theta)
    z = np.random.default_rng(0).normal(size=2000)
    rows = [
        ("ml_value_grad (growth, q=%d)" % ram.q,
         lambda: py.ml_value_grad(*a, True), lambda: cy.ml_value_grad(*a, True), 2000),
        ("prox_vec scad (n=2000)",
         lambda: py.prox_vec(z, 0.5, 0.3, kernels.SCAD, 0.5, 3.7, None),
         lambda: cy.prox_vec(z, 0.5, 0.3, kernels.SCAD, 0.5, 3.7, None), 200),
        ("lasso path (40 lambdas)",
         lambda: run_path_with(py, ram, data), lambda: run_path_with(cy, ram, data), 1),
    ]
    print(f"{'kernel':34}{'python':>12}{'compiled':>12}{'speedup':>9}")
    for name, f_py, f_cy, number in rows:
        t_py = best_of(f_py, args.repeat, number)
        t_cy = best_of(f_cy, args.repeat, number)
        print(f"{name:34}{t_py * 1e3:>10.3f}ms{t_cy * 1e3:>10.3f}ms{t_py / t_cy:>8.1f}x")


if __name__ == "__main__":
    main()
