"""Penalty functions and their proximal maps.

Per-parameter penalties, with ``lam`` included::

    lasso   lam*|x|
    ridge   lam*x**2
    enet    lam*((1 - alpha)*x**2 + alpha*|x|)
    alasso  lam*w*|x|,  w = 1/|x_ml|
    scad    Fan & Li (2001), lam*|x| near zero, constant beyond gamma*lam
    mcp     Zhang (2010), lam*|x| - x**2/(2*gamma), constant beyond gamma*lam
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels

KINDS = {
    "none": kernels.NONE,
    "lasso": kernels.LASSO,
    "ridge": kernels.RIDGE,
    "enet": kernels.ENET,
    "alasso": kernels.ALASSO,
    "scad": kernels.SCAD,
    "mcp": kernels.MCP,
}

W_MAX = 1e6
W_EPS = 1e-9


@dataclass
class PenaltyConfig:
    kind: str = "lasso"
    lam: float = 0.0
    alpha: float = 0.5
    gamma: float = 3.7
    pars_pen: tuple = ()
    weights: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown penalty {self.kind!r}; choose from {sorted(KINDS)}")
        if not self.lam >= 0:
            raise ValueError("lambda must be >= 0")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must lie in [0, 1]")
        if self.kind == "scad" and not self.gamma > 2:
            raise ValueError("SCAD requires gamma > 2")
        if self.kind == "mcp" and not self.gamma > 0:
            raise ValueError("MCP requires gamma > 0")
        self.pars_pen = tuple(int(j) for j in self.pars_pen)
        if any(j < 1 for j in self.pars_pen):
            raise ValueError("parameter ids are 1-based")
        if self.kind == "alasso":
            if self.weights is None:
                raise ValueError("adaptive lasso needs weights (see alasso_weights)")
            self.weights = np.asarray(self.weights, dtype=float)
            if self.weights.shape != (len(self.pars_pen),) or np.any(self.weights <= 0):
                raise ValueError("weights must be positive, one per penalized parameter")
        elif self.weights is not None:
            raise ValueError("weights are only used by the adaptive lasso")

    @property
    def code(self) -> int:
        return KINDS[self.kind]

    @property
    def index(self) -> np.ndarray:
        """0-based positions of the penalized parameters."""
        return np.array(self.pars_pen, dtype=np.intp) - 1

    @property
    def active(self) -> bool:
        return self.kind != "none" and self.lam > 0 and len(self.pars_pen) > 0

    def with_lambda(self, lam: float) -> "PenaltyConfig":
        return PenaltyConfig(self.kind, lam, self.alpha, self.gamma, self.pars_pen, self.weights)

    def check(self, q: int):
        if any(j > q for j in self.pars_pen):
            raise ValueError(f"penalized ids must lie in 1..{q}")

    def weight(self, j: int | None) -> float:
        if self.kind != "alasso":
            return 1.0
        if j is None:
            raise ValueError("adaptive lasso prox needs the parameter id")
        return float(self.weights[self.pars_pen.index(j)])


def penalty_value(theta, cfg: PenaltyConfig) -> float:
    """Total penalty over ``cfg.pars_pen`` at the full parameter vector."""
    if not cfg.pars_pen or cfg.kind == "none":
        return 0.0
    x = np.asarray(theta, dtype=float)[cfg.index]
    return float(kernels.penalty_value(x, cfg.lam, cfg.code, cfg.alpha, cfg.gamma, cfg.weights))


def scalar_penalty(x: float, cfg: PenaltyConfig, j: int | None = None) -> float:
    w = None if cfg.kind != "alasso" else np.array([cfg.weight(j)])
    return float(kernels.penalty_value(np.array([x]), cfg.lam, cfg.code, cfg.alpha, cfg.gamma, w))


def prox(z: float, t: float, cfg: PenaltyConfig, j: int | None = None) -> float:
    """argmin_x 0.5*(x - z)**2 + s*pen(x) with threshold ``t = s*lam``."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    if t == 0 or cfg.lam == 0 or cfg.kind == "none":
        return float(z)
    step = t / cfg.lam
    w = None if cfg.kind != "alasso" else np.array([cfg.weight(j)])
    return float(kernels.prox_vec(np.array([z], dtype=float), step, cfg.lam,
                                  cfg.code, cfg.alpha, cfg.gamma, w)[0])


def prox_vector(z, step: float, cfg: PenaltyConfig) -> np.ndarray:
    """Prox of the penalized block ``z`` (ordered like ``cfg.pars_pen``)."""
    return kernels.prox_vec(np.ascontiguousarray(z, dtype=float), step, cfg.lam,
                            cfg.code, cfg.alpha, cfg.gamma, cfg.weights)


def alasso_weights(mle_theta, pars_pen, w_max: float = W_MAX, eps: float = W_EPS) -> np.ndarray:
    """Adaptive lasso weights 1/|theta_ml| over ``pars_pen``.

    Accepts a raw vector or a fit result; a non-converged fit raises because
    the weights need a usable maximum likelihood solution.
    """
    if hasattr(mle_theta, "conv"):
        if mle_theta.conv != 0:
            raise ValueError("adaptive lasso unavailable: the unpenalized ML fit did not converge")
        mle_theta = mle_theta.theta
    x = np.abs(np.asarray(mle_theta, dtype=float)[np.array(pars_pen, dtype=np.intp) - 1])
    w = np.full(x.shape, w_max)
    ok = x >= eps
    w[ok] = np.minimum(1.0 / x[ok], w_max)
    return w
