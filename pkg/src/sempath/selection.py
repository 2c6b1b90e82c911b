"""Fit indices with sparsity-aware degrees of freedom, penalty paths and
final-model selection."""
from __future__ import annotations

import math
import os
from dataclasses import dataclass, field, replace

import numpy as np

from .optimizer import CONVERGED, FitResult, OptimizerConfig, fit_penalized, multi_start_fit
from .penalties import PenaltyConfig
from .ram import RamModel, SampleMoments, ml_discrepancy, value_and_grad, _aligned

ZERO_TOL = 1e-8
METRICS = ("bic", "rmsea")


class PathError(RuntimeError):
    """No fit on the path converged; ``fits`` carries the table."""

    def __init__(self, message, fits):
        super().__init__(message)
        self.fits = fits


def effective_df(theta, ram: RamModel, pen: PenaltyConfig | None = None,
                 zero_tol: float = ZERO_TOL) -> int:
    """Number of free parameters, not counting penalized ones at zero."""
    theta = np.asarray(theta, dtype=float)
    if pen is None or not pen.pars_pen:
        return ram.q
    zeros = np.abs(theta[pen.index]) <= zero_tol
    return int(ram.q - zeros.sum())


def n_moments(ram: RamModel) -> int:
    p = ram.n_obs
    return p * (p + 1) // 2 + (p if ram.has_mean else 0)


def model_df(ram: RamModel, k: int) -> int:
    """Sample moments minus estimated parameters (incl. sample-fixed ones)."""
    return n_moments(ram) - k - ram.n_sample_fixed


def bic(f_ml: float, N: int, k: int) -> float:
    return N * f_ml + math.log(N) * k


def rmsea(f_ml: float, N: int, df_model: int, chisq_n: int | None = None) -> float:
    """RMSEA from the ML discrepancy; chi-square uses ``N - 1`` unless ``chisq_n`` is given."""
    if df_model <= 0:
        return 0.0
    n1 = N - 1 if chisq_n is None else chisq_n
    chisq = n1 * f_ml
    return math.sqrt(max(chisq - df_model, 0.0) / (df_model * n1))


def fit_indices(f_ml: float, ram: RamModel, N: int, k: int) -> dict:
    df = model_df(ram, k)
    return {"f_ml": f_ml, "chisq": (N - 1) * f_ml, "df": df, "effective_df": k,
            "rmsea": rmsea(f_ml, N, df), "bic": bic(f_ml, N, k)}


def holdout_eval(ram: RamModel, theta, holdout: SampleMoments,
                 pen: PenaltyConfig | None = None) -> dict:
    """Fit indices of a fixed parameter vector against holdout moments."""
    holdout = holdout.subset(ram.obs_names)
    f = ml_discrepancy(ram, theta, holdout)
    return fit_indices(f, ram, holdout.n, effective_df(theta, ram, pen))


@dataclass
class PathConfig:
    n_lambda: int = 20
    jump: float | None = 0.05
    lambda_start: float = 0.0
    metric: str = "bic"
    fit_ret: tuple = ("rmsea", "bic")
    holdout: SampleMoments | None = None
    select_on: str = "train"            # "test" selects on holdout indices
    warm_start: bool = True
    n_jobs: int = 1

    def __post_init__(self):
        if self.n_lambda < 1:
            raise ValueError("n_lambda must be >= 1")
        if self.jump is not None and not self.jump > 0:
            raise ValueError("jump must be > 0")
        if self.lambda_start < 0:
            raise ValueError("lambda_start must be >= 0")
        if self.metric not in METRICS:
            raise ValueError(f"metric must be one of {METRICS}")
        if self.select_on not in ("train", "test"):
            raise ValueError("select_on must be 'train' or 'test'")
        if self.select_on == "test" and self.holdout is None:
            raise ValueError("selecting on test indices needs a holdout sample")

    @property
    def grid(self) -> np.ndarray:
        if self.jump is None:
            raise ValueError("jump is unset")
        return self.lambda_start + self.jump * np.arange(self.n_lambda)

    def with_jump(self, jump: float) -> "PathConfig":
        return replace(self, jump=jump)


@dataclass
class PathResult:
    lambdas: np.ndarray
    fits: list                  # one dict per lambda
    parameters: np.ndarray      # n_lambda x q
    final_index: int
    labels: list
    metric: str
    pars_pen: tuple
    results: list = field(default_factory=list, repr=False)

    @property
    def final_pars(self) -> np.ndarray:
        return self.parameters[self.final_index]

    @property
    def final_lambda(self) -> float:
        return float(self.lambdas[self.final_index])

    @property
    def n_converged(self) -> int:
        return sum(1 for row in self.fits if row["conv"] == CONVERGED)

    def summary(self) -> dict:
        return {"n_penalized": len(self.pars_pen),
                "lambda_min": float(self.lambdas[0]), "lambda_max": float(self.lambdas[-1]),
                "final_lambda": self.final_lambda, "metric": self.metric,
                "n_converged": self.n_converged}

    def summary_text(self) -> str:
        s = self.summary()
        return "\n".join([
            "Penalty path",
            f" Number of parameters regularized: {s['n_penalized']}",
            f" Lambda ranging from {s['lambda_min']:g} to {s['lambda_max']:g}",
            f" Lowest Fit Lambda: {s['final_lambda']:g}",
            f" Metric: {s['metric'].upper() if s['metric'] == 'bic' else s['metric']}",
            f" Number Converged: {s['n_converged']}",
        ])


def select_final(fits: list, key: str) -> int:
    """Row index minimizing ``key`` among converged fits."""
    best, best_val = None, np.inf
    for i, row in enumerate(fits):
        if row["conv"] != CONVERGED or not np.isfinite(row[key]):
            continue
        if row[key] < best_val:
            best, best_val = i, row[key]
    if best is None:
        raise PathError("no fit on the path converged", fits)
    return best


def _row(res: FitResult, ram, data, pen, path):
    k = effective_df(res.theta, ram, pen)
    idx = fit_indices(res.f_ml, ram, data.n, k) if np.isfinite(res.f_ml) else {
        "f_ml": res.f_ml, "chisq": np.inf, "df": model_df(ram, k), "effective_df": k,
        "rmsea": np.inf, "bic": np.inf}
    res.fit_indices = idx
    row = {"lambda": res.lam, "conv": res.conv, "f_ml": res.f_ml, "f_regsem": res.f_regsem,
           "effective_df": k, "iterations": res.iterations}
    for name in path.fit_ret:
        row[name] = idx[name]
    row.setdefault(path.metric, idx[path.metric])
    if path.holdout is not None:
        test = holdout_eval(ram, res.theta, path.holdout, pen)
        for name in ("f_ml",) + tuple(path.fit_ret):
            row[f"test_{name}"] = test[name]
        row.setdefault(f"test_{path.metric}", test[path.metric])
    return row


def _n_workers(requested: int) -> int:
    cap = os.environ.get("SEMPATH_THREADS")
    if cap:
        requested = min(requested, max(1, int(cap)))
    return max(1, requested)


def run_path(ram: RamModel, data: SampleMoments, pen_template: PenaltyConfig, path: PathConfig,
             opt: OptimizerConfig | None = None, theta0=None) -> PathResult:
    """Fit every lambda of the grid in ascending order and select a final model.

    With ``warm_start`` each fit starts from the previous solution; otherwise
    every fit starts from ``theta0`` (default starts) and fits may run on
    several threads.
    """
    opt = opt or OptimizerConfig()
    data = _aligned(ram, data)
    grid = path.grid
    start = ram.start if theta0 is None else np.asarray(theta0, dtype=float)
    results = []
    fitter = multi_start_fit if opt.n_starts > 1 else fit_penalized
    if path.warm_start:
        theta = start
        for lam in grid:
            res = fitter(ram, data, pen_template.with_lambda(float(lam)), opt, theta)
            results.append(res)
            if np.all(np.isfinite(res.theta)) and np.isfinite(res.f_ml):
                theta = res.theta
    else:
        def one(lam):
            return fitter(ram, data, pen_template.with_lambda(float(lam)), opt, start)
        workers = _n_workers(path.n_jobs)
        if workers > 1:
            from concurrent.futures import ThreadPoolExecutor
            with ThreadPoolExecutor(workers) as ex:
                results = list(ex.map(one, grid))
        else:
            results = [one(lam) for lam in grid]
    fits = [_row(r, ram, data, pen_template.with_lambda(r.lam), path) for r in results]
    key = path.metric if path.select_on == "train" else f"test_{path.metric}"
    final = select_final(fits, key)
    return PathResult(lambdas=grid, fits=fits, parameters=np.array([r.theta for r in results]),
                      final_index=final, labels=ram.labels, metric=path.metric,
                      pars_pen=pen_template.pars_pen, results=results)


def lambda_max(ram: RamModel, data: SampleMoments, pen: PenaltyConfig,
               opt: OptimizerConfig | None = None, theta0=None) -> float:
    """Smallest lambda at which all penalized parameters at zero is stationary.

    Fits the model with the penalized block held at zero and reads off the
    largest scaled gradient there. Ridge never zeroes, so its scale follows
    the lasso's. When every path through a latent is penalized (all
    loadings of a factor with fixed variance) the zero block is stationary
    for any lambda and the result is 0.
    """
    opt = opt or OptimizerConfig()
    data = _aligned(ram, data)
    start = ram.start if theta0 is None else np.array(theta0, dtype=float)
    start = start.copy()
    start[pen.index] = 0.0
    hold = PenaltyConfig("lasso", 1e8, pars_pen=pen.pars_pen)
    res = fit_penalized(ram, data, hold, opt, start)
    _, g = value_and_grad(ram, res.theta, data)
    if g is None:
        raise ValueError("restricted model is inadmissible")
    gp = np.abs(g[pen.index])
    if pen.kind == "alasso":
        gp = gp / pen.weights
    elif pen.kind == "enet":
        gp = gp / max(pen.alpha, 1e-3)
    return float(gp.max())


def suggest_jump(ram, data, pen, n_lambda: int, opt=None, ml_fit=None, margin: float = 1.05) -> float:
    """Grid spacing so that the last of ``n_lambda`` values exceeds ``lambda_max``."""
    theta0 = None if ml_fit is None else ml_fit.theta
    lmax = lambda_max(ram, data, pen, opt, theta0)
    if lmax <= 1e-8:
        raise ValueError("the all-zero penalized block is stationary at every lambda; "
                         "give the grid spacing explicitly")
    return margin * lmax / max(n_lambda - 1, 1)
