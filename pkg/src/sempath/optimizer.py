"""Proximal gradient and proximal quasi-Newton minimization of F_ML + penalty."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .penalties import PenaltyConfig, penalty_value, prox_vector
from .ram import RamModel, SampleMoments, objective

log = logging.getLogger(__name__)

CONVERGED, NOT_CONVERGED, INFEASIBLE = 0, 1, 99


@dataclass
class OptimizerConfig:
    method: str = "auto"            # "grad", "qn" or "auto"
    max_iter: int = 5000
    tol: float = 1e-5
    step_init: float = 1.0
    backtrack_factor: float = 0.5
    armijo_c: float = 1e-4
    n_starts: int = 1
    variance_floor: float = 1e-4
    seed: int = 0
    qn_threshold: int = 30          # "auto" uses qn above this many parameters
    bb_steps: bool = True           # Barzilai-Borwein trial steps for "grad"

    def __post_init__(self):
        if self.method not in ("grad", "qn", "auto"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.max_iter < 1 or not self.tol > 0:
            raise ValueError("max_iter must be >= 1 and tol > 0")
        if not 0 < self.backtrack_factor < 1:
            raise ValueError("backtrack_factor must lie in (0, 1)")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")

    def resolve_method(self, q: int) -> str:
        if self.method != "auto":
            return self.method
        return "qn" if q > self.qn_threshold else "grad"


@dataclass
class FitResult:
    theta: np.ndarray
    f_ml: float
    f_regsem: float
    conv: int
    iterations: int
    lam: float
    fit_indices: dict = field(default_factory=dict)
    residual: float = float("nan")


def bfgs_update(H_inv, s_vec, y_vec, curvature_eps: float = 1e-10):
    """BFGS update of an inverse Hessian approximation.

    The update is skipped (input returned unchanged) unless
    ``s'y > curvature_eps * |s| * |y|``.
    """
    s_vec = np.asarray(s_vec, dtype=float)
    y_vec = np.asarray(y_vec, dtype=float)
    sy = float(s_vec @ y_vec)
    if not sy > curvature_eps * np.linalg.norm(s_vec) * np.linalg.norm(y_vec):
        return H_inv
    rho = 1.0 / sy
    Hy = H_inv @ y_vec
    H_new = (H_inv - rho * (np.outer(s_vec, Hy) + np.outer(Hy, s_vec))
             + (rho * rho * (y_vec @ Hy) + rho) * np.outer(s_vec, s_vec))
    return 0.5 * (H_new + H_new.T)


def _prox_step(theta, d, s, pen, pidx, lower):
    new = theta - s * d
    if pen.active:
        new[pidx] = prox_vector(new[pidx], s, pen)
    if lower is not None:
        np.maximum(new, lower, out=new)
    return new


def prox_residual(theta, grad, pen: PenaltyConfig, lower=None) -> float:
    """max |theta - prox(theta - grad)| at unit step; zero at stationary points."""
    pidx = pen.index if pen.active else None
    moved = _prox_step(theta, grad, 1.0, pen, pidx, lower)
    return float(np.max(np.abs(moved - theta))) if theta.size else 0.0


def minimize_penalized(fun, theta0, pen: PenaltyConfig, opt: OptimizerConfig, lower=None,
                       method: str | None = None, trace: list | None = None):
    """Minimize ``f(theta) + penalty(theta)`` for a smooth ``f``.

    ``fun(theta, want_grad)`` returns ``(value, grad)`` with ``value = inf``
    outside the admissible region. Penalized coordinates take the proximal
    step; the rest take the plain (or quasi-Newton) step. Returns
    ``(theta, f, conv, iterations, residual)``. ``trace`` collects the
    accepted objective values when given.
    """
    method = method or opt.resolve_method(len(theta0))
    theta = np.array(theta0, dtype=float)
    if lower is not None:
        theta = np.maximum(theta, lower)
    pidx = pen.index if pen.active else None
    f, g = fun(theta, True)
    if not np.isfinite(f) or g is None:
        return theta, float("inf"), INFEASIBLE, 0, float("inf")
    P = penalty_value(theta, pen)
    F = f + P
    if trace is not None:
        trace.append(F)
    n = theta.size
    H = np.eye(n) if method == "qn" else None
    s_prev = opt.step_init
    bb = None
    force_grad = False
    residual = prox_residual(theta, g, pen, lower)
    it = 0
    while it < opt.max_iter:
        if residual < opt.tol:
            return theta, f, CONVERGED, it, residual
        it += 1
        use_qn = H is not None and not force_grad
        d = H @ g if use_qn else g
        if use_qn:
            s = opt.step_init
        elif opt.bb_steps and bb is not None:
            s = bb
        else:
            s = min(opt.step_init, s_prev / opt.backtrack_factor)
        accepted = False
        any_feasible = False
        delta = np.zeros(n)
        while s > 1e-14:
            new = _prox_step(theta, d, s, pen, pidx, lower)
            delta = new - theta
            if not np.any(delta):
                break
            f_new, _ = fun(new, False)
            if np.isfinite(f_new):
                any_feasible = True
                P_new = penalty_value(new, pen)
                D = float(g @ delta) + P_new - P
                if D < 0 and f_new + P_new <= F + opt.armijo_c * D:
                    accepted = True
                    break
            s *= opt.backtrack_factor
        if not accepted:
            if use_qn:
                # quasi-Newton direction unusable here: restart from the gradient
                H = np.eye(n)
                force_grad = True
                s_prev = opt.step_init
                continue
            conv = NOT_CONVERGED if any_feasible or not np.any(delta) else INFEASIBLE
            log.debug("line search failed at iteration %d (residual %.3g)", it, residual)
            return theta, f, conv, it, residual
        f_new, g_new = fun(new, True)
        y = g_new - g
        if H is not None:
            H = bfgs_update(H, delta, y)
        sy = float(delta @ y)
        bb = float(np.clip(delta @ delta / sy, 1e-10, 1e10)) if sy > 0 else None
        # a quasi-Newton fixed point need not be stationary; take gradient steps there
        force_grad = use_qn and np.max(np.abs(delta)) < 1e-3 * opt.tol
        theta, f, g, P, F = new, f_new, g_new, P_new, f_new + P_new
        if not use_qn:
            s_prev = s
        if trace is not None:
            trace.append(F)
        residual = prox_residual(theta, g, pen, lower)
    conv = CONVERGED if residual < opt.tol else NOT_CONVERGED
    return theta, f, conv, it, residual


def lower_bounds(ram: RamModel, floor: float) -> np.ndarray:
    lower = np.full(ram.q, -np.inf)
    lower[np.array(ram.variance_ids, dtype=np.intp) - 1] = floor
    return lower


def fit_penalized(ram: RamModel, data: SampleMoments, pen: PenaltyConfig,
                  opt: OptimizerConfig | None = None, theta0=None, trace=None) -> FitResult:
    """Penalized ML fit of ``ram`` to ``data`` from ``theta0`` (default starts)."""
    opt = opt or OptimizerConfig()
    pen.check(ram.q)
    theta0 = ram.start if theta0 is None else np.asarray(theta0, dtype=float)
    fun = objective(ram, data)
    theta, f, conv, iters, res = minimize_penalized(
        fun, theta0, pen, opt, lower_bounds(ram, opt.variance_floor), trace=trace)
    return FitResult(theta=theta, f_ml=float(f), f_regsem=float(f + penalty_value(theta, pen)),
                     conv=conv, iterations=iters, lam=pen.lam, residual=res)


def jittered_starts(base, n_starts: int, seed: int):
    """``base`` followed by ``n_starts - 1`` uniform +/-50% multiplicative jitters."""
    rng = np.random.default_rng(seed)
    starts = [np.array(base, dtype=float)]
    for _ in range(n_starts - 1):
        starts.append(base * (1.0 + rng.uniform(-0.5, 0.5, size=len(base))))
    return starts


def multi_start_fit(ram: RamModel, data: SampleMoments, pen: PenaltyConfig,
                    opt: OptimizerConfig | None = None, theta0=None) -> FitResult:
    """Best converged fit over jittered starting values.

    Returns the lowest penalized objective among converged starts; if none
    converged, the best incumbent with ``conv = 1``.
    """
    opt = opt or OptimizerConfig()
    base = ram.start if theta0 is None else np.asarray(theta0, dtype=float)
    results = [fit_penalized(ram, data, pen, opt, start)
               for start in jittered_starts(base, opt.n_starts, opt.seed)]
    if len(results) == 1:
        return results[0]
    ok = [r for r in results if r.conv == CONVERGED]
    if ok:
        return min(ok, key=lambda r: r.f_regsem)
    best = min(results, key=lambda r: r.f_regsem if np.isfinite(r.f_regsem) else np.inf)
    best.conv = NOT_CONVERGED
    return best
