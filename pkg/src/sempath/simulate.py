"""Data generators for the growth-curve and one-factor designs, and the
false positive / false negative replication study."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .optimizer import CONVERGED, OptimizerConfig, fit_penalized
from .penalties import PenaltyConfig, alasso_weights
from .ram import SampleMoments, build_ram, value_and_grad, _aligned
from .selection import PathConfig, run_path, suggest_jump
from .syntax import parse_model

log = logging.getLogger(__name__)

N_COV = 10
TIMES = (0, 1, 2, 3)
GROWTH_NAMES = tuple(f"x{t + 1}" for t in TIMES) + tuple(f"c{k}" for k in range(1, N_COV + 1))

GROWTH_MODEL = """
i =~ 1*x1 + 1*x2 + 1*x3 + 1*x4
s =~ 0*x1 + 1*x2 + 2*x3 + 3*x4
i ~ c1 + c2 + c3 + c4 + c5 + c6 + c7 + c8 + c9 + c10
s ~ c1 + c2 + c3 + c4 + c5 + c6 + c7 + c8 + c9 + c10
"""

GROWTH_TRUTH = {
    "effects": (1.0, 0.2) + (0.0,) * (N_COV - 2),   # same for intercept and slope
    "var_i": 1.0,
    "var_s": 0.25,
    "var_e": 1.0,
}


def growth_true_theta(ram) -> np.ndarray:
    """True parameter vector of the growth design in ``ram``'s ordering."""
    eff = GROWTH_TRUTH["effects"]
    out = []
    for prm in ram.params:
        lab = prm.label
        if " -> " in lab and lab.startswith("c"):
            out.append(eff[int(lab.split(" ")[0][1:]) - 1])
        elif lab == "i ~~ i":
            out.append(GROWTH_TRUTH["var_i"])
        elif lab == "s ~~ s":
            out.append(GROWTH_TRUTH["var_s"])
        elif lab.startswith("x") and "~~" in lab:
            out.append(GROWTH_TRUTH["var_e"])
        else:
            out.append(0.0)     # i ~~ s and latent means
    return np.array(out)


def simulate_growth(N: int, seed, return_latent: bool = False):
    """N x 14 matrix with columns x1..x4, c1..c10 (see ``GROWTH_NAMES``).

    With ``return_latent`` also returns the N x 2 intercept and slope scores.
    """
    rng = np.random.default_rng(seed)
    eff = np.array(GROWTH_TRUTH["effects"])
    c = rng.standard_normal((N, N_COV))
    i = c @ eff + rng.normal(0.0, math.sqrt(GROWTH_TRUTH["var_i"]), N)
    s = c @ eff + rng.normal(0.0, math.sqrt(GROWTH_TRUTH["var_s"]), N)
    x = np.column_stack([i + t * s for t in TIMES])
    x += rng.normal(0.0, math.sqrt(GROWTH_TRUTH["var_e"]), x.shape)
    out = np.column_stack([x, c])
    if return_latent:
        return out, np.column_stack([i, s])
    return out


def cfa_model(n_ind: int, prefix: str = "y") -> str:
    names = [f"{prefix}{k}" for k in range(1, n_ind + 1)]
    return "f1 =~ NA*" + " + ".join(names) + "\nf1 ~~ 1*f1\n"


def simulate_cfa(N: int, loadings, seed, resid_var=None) -> np.ndarray:
    """One standard-normal factor: y_j = loading_j * f + e_j.

    Residual variances default to ``1 - loading**2`` (unit indicator
    variance) where that is positive, else 1.
    """
    lam = np.asarray(loadings, dtype=float)
    if resid_var is None:
        resid_var = np.where(np.abs(lam) < 1, 1.0 - lam ** 2, 1.0)
    rng = np.random.default_rng(seed)
    f = rng.standard_normal(N)
    e = rng.standard_normal((N, lam.size)) * np.sqrt(resid_var)
    return np.outer(f, lam) + e


@dataclass
class SimDesign:
    model_kind: str = "growth"      # "growth" or "cfa"
    N: int = 200
    n_reps: int = 50
    seed: int = 0
    true_params: dict = field(default_factory=lambda: dict(GROWTH_TRUTH))

    def __post_init__(self):
        if self.model_kind not in ("growth", "cfa"):
            raise ValueError("model_kind must be 'growth' or 'cfa'")
        if self.N < 10 or self.n_reps < 1:
            raise ValueError("need N >= 10 and n_reps >= 1")


@dataclass
class ReplicationReport:
    N: int
    methods: tuple
    # per method: counts summed over converged replications
    false_pos: dict
    true_neg: dict
    false_neg: dict
    true_pos: dict
    n_converged: dict
    n_reps: int

    def fp_rate(self, method):
        tot = self.false_pos[method] + self.true_neg[method]
        return self.false_pos[method] / tot if tot else float("nan")

    def fn_rate(self, method):
        tot = self.false_neg[method] + self.true_pos[method]
        return self.false_neg[method] / tot if tot else float("nan")

    def convergence_rate(self, method):
        return self.n_converged[method] / self.n_reps

    def rows(self):
        for m in self.methods:
            yield {"N": self.N, "method": m, "false_positive_rate": self.fp_rate(m),
                   "false_negative_rate": self.fn_rate(m),
                   "convergence_rate": self.convergence_rate(m),
                   "false_pos": self.false_pos[m], "true_neg": self.true_neg[m],
                   "false_neg": self.false_neg[m], "true_pos": self.true_pos[m]}

    def table(self) -> str:
        head = f"{'':16}{'N':>8}" + "".join(f"{m:>9}" for m in self.methods)
        fp = f"{'False Positives':16}{self.N:>8}" + "".join(f"{self.fp_rate(m):>9.2f}" for m in self.methods)
        fn = f"{'False Negatives':16}{self.N:>8}" + "".join(f"{self.fn_rate(m):>9.2f}" for m in self.methods)
        return "\n".join([head, fp, fn])


def wald_pvalues(ram, theta, data: SampleMoments, h: float = 1e-5) -> np.ndarray:
    """Two-sided Wald p-values from the inverse observed information.

    The Hessian of F_ML is taken by central differences of the analytic
    gradient; the log-likelihood is ``-N/2 * F_ML`` up to a constant.
    """
    data = _aligned(ram, data)
    q = ram.q
    H = np.empty((q, q))
    for k in range(q):
        e = np.zeros(q)
        e[k] = h
        _, gp = value_and_grad(ram, theta + e, data)
        _, gm = value_and_grad(ram, theta - e, data)
        if gp is None or gm is None:
            return np.full(q, np.nan)
        H[:, k] = (gp - gm) / (2 * h)
    H = 0.5 * (H + H.T)
    try:
        cov = 2.0 / data.n * np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return np.full(q, np.nan)
    se = np.sqrt(np.where(np.diag(cov) > 0, np.diag(cov), np.nan))
    z = np.abs(theta) / se
    return np.array([math.erfc(v / math.sqrt(2)) if np.isfinite(v) else np.nan for v in z])


def _classify(nonzero, truth_nonzero):
    fp = int(np.sum(nonzero & ~truth_nonzero))
    tn = int(np.sum(~nonzero & ~truth_nonzero))
    fn = int(np.sum(~nonzero & truth_nonzero))
    tp = int(np.sum(nonzero & truth_nonzero))
    return fp, tn, fn, tp


def replicate_once(N: int, seed, methods, path: PathConfig, opt: OptimizerConfig | None = None,
                   zero_tol: float = 1e-8, alpha: float = 0.05):
    """One replication of the growth design.

    Returns ``{method: (fp, tn, fn, tp)}`` or ``None`` for methods whose fit
    failed to converge.
    """
    opt = opt or OptimizerConfig()
    X = simulate_growth(N, seed)
    data = SampleMoments.from_data(X, GROWTH_NAMES)
    spec = parse_model(GROWTH_MODEL, growth=True)
    ram = build_ram(spec, GROWTH_NAMES, data)
    reg_ids = ram.ids(kind="regression")
    idx = np.array(reg_ids) - 1
    truth = growth_true_theta(ram)[idx] != 0
    out = {}
    ml = fit_penalized(ram, data, PenaltyConfig("none", pars_pen=reg_ids), opt)
    for method in methods:
        if method == "ml":
            if ml.conv != CONVERGED:
                out[method] = None
                continue
            pv = wald_pvalues(ram, ml.theta, data)[idx]
            out[method] = _classify(pv < alpha, truth)
            continue
        weights = None
        if method == "alasso":
            if ml.conv != CONVERGED:
                out[method] = None
                continue
            weights = alasso_weights(ml, reg_ids)
        pen = PenaltyConfig(method, 0.0, pars_pen=reg_ids, weights=weights)
        cfg = path
        if path.jump is None:
            cfg = path.with_jump(suggest_jump(ram, data, pen, path.n_lambda, opt, ml))
        try:
            res = run_path(ram, data, pen, cfg, opt, theta0=ml.theta if ml.conv == CONVERGED else None)
        except RuntimeError:
            out[method] = None
            continue
        est = res.final_pars[idx]
        out[method] = _classify(np.abs(est) > zero_tol, truth)
    return out


def replication_study(design: SimDesign, methods=("ml", "lasso", "alasso", "scad", "mcp"),
                      path: PathConfig | None = None, opt: OptimizerConfig | None = None,
                      n_jobs: int = 1) -> ReplicationReport:
    """False positive / negative rates of each method over seeded replications.

    Each replication gets its own RNG stream spawned from ``design.seed``.
    """
    if design.model_kind != "growth":
        raise NotImplementedError("the replication study covers the growth design")
    path = path or PathConfig(n_lambda=40, jump=None)
    seeds = np.random.SeedSequence(design.seed).spawn(design.n_reps)
    args = [(design.N, s, tuple(methods), path, opt) for s in seeds]
    if n_jobs > 1:
        from concurrent.futures import ProcessPoolExecutor
        with ProcessPoolExecutor(n_jobs) as ex:
            results = list(ex.map(_replicate_star, args))
    else:
        results = [_replicate_star(a) for a in args]
    counts = {k: {m: 0 for m in methods} for k in ("fp", "tn", "fn", "tp", "conv")}
    for rep in results:
        for m in methods:
            if rep[m] is None:
                continue
            counts["conv"][m] += 1
            for key, v in zip(("fp", "tn", "fn", "tp"), rep[m]):
                counts[key][m] += v
    return ReplicationReport(N=design.N, methods=tuple(methods), false_pos=counts["fp"],
                             true_neg=counts["tn"], false_neg=counts["fn"],
                             true_pos=counts["tp"], n_converged=counts["conv"],
                             n_reps=design.n_reps)


def _replicate_star(a):
    return replicate_once(*a)
