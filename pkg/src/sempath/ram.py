"""RAM representation of a model: compilation, implied moments and ML fit."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .syntax import Fixed, Labelled, ModelSpec, unscaled_latents


class ModelError(ValueError):
    """Raised when a spec cannot be compiled to RAM matrices."""


class InadmissibleError(ArithmeticError):
    """I - A is singular or the implied covariance is not positive definite."""


@dataclass
class SampleMoments:
    """Sample covariance (ML divisor by default), means and size.

    ``cov`` must be symmetric positive definite; ``var_names`` gives the
    row order.
    """

    cov: np.ndarray
    n: int
    var_names: tuple
    mean: np.ndarray | None = None
    n_dropped: int = 0              # rows removed by listwise deletion
    logdet: float = field(init=False)

    def __post_init__(self):
        self.cov = np.array(self.cov, dtype=float)
        self.var_names = tuple(self.var_names)
        p = len(self.var_names)
        if self.cov.shape != (p, p):
            raise ValueError(f"covariance shape {self.cov.shape} does not match {p} names")
        if not np.allclose(self.cov, self.cov.T, atol=1e-10):
            raise ValueError("covariance matrix is not symmetric")
        self.cov = 0.5 * (self.cov + self.cov.T)
        if self.n < 2:
            raise ValueError("sample size must be at least 2")
        try:
            chol = np.linalg.cholesky(self.cov)
        except np.linalg.LinAlgError:
            raise ValueError("covariance matrix is not positive definite") from None
        self.logdet = 2.0 * np.log(np.diag(chol)).sum()
        if self.mean is not None:
            self.mean = np.asarray(self.mean, dtype=float)

    @classmethod
    def from_data(cls, X, var_names, ddof: int = 0) -> "SampleMoments":
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[0] < 2:
            raise ValueError("need a 2-d data matrix with at least 2 rows")
        cov = np.cov(X, rowvar=False, ddof=ddof).reshape(X.shape[1], X.shape[1])
        return cls(cov=cov, n=X.shape[0], var_names=var_names, mean=X.mean(axis=0))

    def subset(self, names) -> "SampleMoments":
        names = tuple(names)
        if names == self.var_names:
            return self
        pos = {v: i for i, v in enumerate(self.var_names)}
        missing = [v for v in names if v not in pos]
        if missing:
            raise ValueError(f"variables not in data: {missing}")
        idx = [pos[v] for v in names]
        mean = None if self.mean is None else self.mean[idx]
        return SampleMoments(cov=self.cov[np.ix_(idx, idx)], n=self.n,
                             var_names=names, mean=mean)


@dataclass(frozen=True)
class Param:
    pid: int            # 1-based, dense
    matrix: str         # "A", "S" or "M"
    row: int
    col: int
    label: str
    start: float
    kind: str           # loading, regression, variance, covariance, mean


@dataclass
class RamModel:
    names: tuple
    n_obs: int
    A0: np.ndarray
    S0: np.ndarray
    M0: np.ndarray | None
    params: list
    n_sample_fixed: int = 0
    user_labels: dict = field(default_factory=dict)

    def __post_init__(self):
        cells = [(("A", "S", "M").index(p.matrix), p.row, p.col, p.pid - 1) for p in self.params]
        arr = np.array(cells, dtype=np.intp).reshape(-1, 4)
        self.cmat, self.crow, self.ccol, self.cpid = (np.ascontiguousarray(arr[:, i]) for i in range(4))

    @property
    def q(self) -> int:
        return len(self.params)

    @property
    def t(self) -> int:
        return len(self.names)

    @property
    def obs_names(self) -> tuple:
        return self.names[: self.n_obs]

    @property
    def has_mean(self) -> bool:
        return self.M0 is not None

    @property
    def F(self) -> np.ndarray:
        return np.eye(self.n_obs, self.t)

    @property
    def labels(self) -> list[str]:
        return [p.label for p in self.params]

    @property
    def start(self) -> np.ndarray:
        return np.array([p.start for p in self.params])

    def ids(self, kind=None, matrix=None) -> list[int]:
        return [p.pid for p in self.params
                if (kind is None or p.kind == kind) and (matrix is None or p.matrix == matrix)]

    @property
    def variance_ids(self) -> list[int]:
        return self.ids(kind="variance")

    def matrices(self, theta):
        theta = np.ascontiguousarray(theta, dtype=float)
        if theta.shape != (self.q,):
            raise ValueError(f"theta must have length {self.q}")
        return kernels.fill_matrices(theta, self.A0, self.S0, self.M0,
                                     self.cmat, self.crow, self.ccol, self.cpid)

    def resolve(self, selector) -> list[int]:
        """Map labels, 1-based ids or ``"all-directed"`` to parameter ids."""
        if selector is None or selector == "all-directed":
            return self.ids(matrix="A")
        if isinstance(selector, (str, int)):
            selector = [selector]
        by_label = {p.label: p.pid for p in self.params}
        by_label.update(self.user_labels)
        out = []
        for s in selector:
            if isinstance(s, (int, np.integer)) or (isinstance(s, str) and s.isdigit()):
                k = int(s)
                if not 1 <= k <= self.q:
                    raise ValueError(f"parameter id {k} out of range 1..{self.q}")
                out.append(k)
            elif s in by_label:
                out.append(by_label[s])
            else:
                raise ValueError(f"unknown parameter {s!r}")
        return sorted(set(out))


def _status_cell(status, label_default):
    """(is_free, fixed_value, label) for a coefficient status."""
    if isinstance(status, Fixed):
        return False, status.value, label_default
    if isinstance(status, Labelled):
        return True, 0.0, status.label
    return True, 0.0, label_default


def build_ram(spec: ModelSpec, var_order, data: SampleMoments | None = None) -> RamModel:
    """Compile a spec to RAM matrices.

    Observed variables come first (in ``var_order``), then latents. Parameter
    ids run over loadings, regressions, variances/covariances and means, in
    that order. ``data`` supplies start values and, with ``fixed_x``, the
    fixed moments of exogenous observed variables.
    """
    missing = [v for v in spec.observed_vars if v not in var_order]
    if missing:
        raise ModelError(f"unknown variable(s) {missing}: not in variable order")
    bad = unscaled_latents(spec)
    if bad:
        raise ModelError(f"latent variable(s) {bad} unscaled: fix a loading or the variance")
    obs = [v for v in var_order if v in spec.observed_vars]
    names = tuple(obs) + tuple(spec.latent_vars)
    idx = {v: i for i, v in enumerate(names)}
    p, t = len(obs), len(names)

    if data is not None:
        data = data.subset(obs)
        obs_var = np.diag(data.cov)
    else:
        obs_var = np.ones(p)

    exog = spec.exogenous_observed()
    sample_fixed = spec.fixed_x and bool(exog)
    if sample_fixed and data is None:
        raise ModelError("fixed_x with exogenous observed variables requires data")
    if spec.growth and data is not None and data.mean is None:
        raise ModelError("mean structure requires sample means")

    A0 = np.zeros((t, t))
    S0 = np.zeros((t, t))
    M0 = np.zeros(t) if spec.growth else None
    params: list[Param] = []
    user_labels = {}

    def add(matrix, row, col, free, value, label, start, kind, user_label=None):
        if free:
            params.append(Param(len(params) + 1, matrix, row, col, label, start, kind))
            if user_label:
                user_labels[user_label] = len(params)
        elif matrix == "A":
            A0[row, col] = value
        elif matrix == "S":
            S0[row, col] = S0[col, row] = value
        else:
            M0[row] = value

    indicators = {}
    for lv, ind in spec.latent_defs:
        indicators[lv] = [name for name, _ in ind]
        for name, status in ind:
            free, value, label = _status_cell(status, f"{lv} -> {name}")
            add("A", idx[name], idx[lv], free, value, label, 0.5, "loading",
                status.label if isinstance(status, Labelled) else None)
    for out, pred, status in spec.regressions:
        free, value, label = _status_cell(status, f"{pred} -> {out}")
        add("A", idx[out], idx[pred], free, value, label, 0.5, "regression",
            status.label if isinstance(status, Labelled) else None)

    def var_start(v):
        i = idx[v]
        if i < p:
            return 0.5 * obs_var[i]
        ind = [idx[x] for x in indicators.get(v, []) if idx[x] < p]
        return 0.5 * float(np.mean(obs_var[ind])) if ind else 0.5

    stated = set()
    for a, b, status in spec.covariances:
        stated.add(frozenset((a, b)))
        kind = "variance" if a == b else "covariance"
        free, value, label = _status_cell(status, f"{a} ~~ {b}")
        i, j = sorted((idx[a], idx[b]))
        add("S", i, j, free, value, label, var_start(a) if a == b else 0.0, kind,
            status.label if isinstance(status, Labelled) else None)

    n_sample_fixed = 0
    exog_set = set(exog)
    for v in names:
        if frozenset((v,)) in stated:
            continue
        if v in exog_set and sample_fixed:
            continue
        add("S", idx[v], idx[v], True, 0.0, f"{v} ~~ {v}", var_start(v), "variance")

    # residual covariances among exogenous latents and among endogenous latents/outcomes
    outcomes = {o for o, _, _ in spec.regressions}
    all_ind = {x for ind in indicators.values() for x in ind}
    directed = {frozenset((o, pr)) for o, pr, _ in spec.regressions}
    exo_lat = [v for v in spec.latent_vars if v not in outcomes]
    endo = [v for v in names if v in outcomes and v not in all_ind]
    for group in (exo_lat, endo):
        for k, a in enumerate(group):
            for b in group[k + 1:]:
                pair = frozenset((a, b))
                if pair in stated or pair in directed:
                    continue
                i, j = sorted((idx[a], idx[b]))
                add("S", i, j, True, 0.0, f"{a} ~~ {b}", 0.0, "covariance")

    if exog:
        e_idx = [idx[v] for v in exog]
        if sample_fixed:
            S0[np.ix_(e_idx, e_idx)] = data.cov[np.ix_(e_idx, e_idx)]
            n_sample_fixed += len(exog) * (len(exog) + 1) // 2
        else:
            for k, a in enumerate(exog):
                for b in exog[k + 1:]:
                    if frozenset((a, b)) not in stated:
                        add("S", idx[a], idx[b], True, 0.0, f"{a} ~~ {b}", 0.0, "covariance")

    if spec.growth:
        for v in names:
            i = idx[v]
            if i >= p:
                add("M", i, 0, True, 0.0, f"1 -> {v}", 0.0, "mean")
            elif v in exog_set:
                if sample_fixed:
                    M0[i] = data.mean[i]
                    n_sample_fixed += 1
                else:
                    add("M", i, 0, True, 0.0, f"1 -> {v}",
                        0.0 if data is None else data.mean[i], "mean")
    return RamModel(names=names, n_obs=p, A0=A0, S0=S0, M0=M0, params=params,
                    n_sample_fixed=n_sample_fixed, user_labels=user_labels)


def implied_moments(ram: RamModel, theta):
    """Implied covariance (and mean vector when modelled) at ``theta``.

    Raises :class:`InadmissibleError` if I - A is singular.
    """
    A, S, M = ram.matrices(theta)
    try:
        B = np.linalg.inv(np.eye(ram.t) - A)
    except np.linalg.LinAlgError:
        raise InadmissibleError("I - A is singular") from None
    FB = B[: ram.n_obs]
    sigma = FB @ S @ FB.T
    sigma = 0.5 * (sigma + sigma.T)
    mu = None if M is None else FB @ M
    return sigma, mu


def _aligned(ram: RamModel, data: SampleMoments) -> SampleMoments:
    data = data.subset(ram.obs_names)
    if ram.has_mean and data.mean is None:
        raise ValueError("model has a mean structure but data carries no means")
    return data


def value_and_grad(ram: RamModel, theta, data: SampleMoments, want_grad: bool = True):
    """``(F_ML, gradient)``; ``(inf, None)`` when inadmissible."""
    A, S, M = ram.matrices(theta)
    m = data.mean if ram.has_mean else None
    return kernels.ml_value_grad(A, S, M, ram.n_obs, data.cov, m, data.logdet,
                                 ram.cmat, ram.crow, ram.ccol, ram.cpid, ram.q, want_grad)


def ml_discrepancy(ram: RamModel, theta, data: SampleMoments) -> float:
    """ML discrepancy; ``inf`` flags an inadmissible point."""
    value, _ = value_and_grad(ram, theta, _aligned(ram, data), want_grad=False)
    return value


def ml_gradient(ram: RamModel, theta, data: SampleMoments) -> np.ndarray:
    value, grad = value_and_grad(ram, theta, _aligned(ram, data))
    if grad is None:
        raise InadmissibleError("implied covariance is not positive definite")
    return grad


def objective(ram: RamModel, data: SampleMoments):
    """Return a ``theta -> (F_ML, gradient)`` callable bound to aligned data."""
    data = _aligned(ram, data)

    def fun(theta, want_grad=True):
        return value_and_grad(ram, theta, data, want_grad)

    return fun


def _render(mat, names, width):
    rows = [" " * width + "".join(f"{n:>{width}}" for n in names)]
    for name, row in zip(names, mat):
        rows.append(f"{name:<{width}}" + "".join(f"{c:>{width}}" for c in row))
    return "\n".join(rows)


def _fmt_const(v):
    return str(int(v)) if float(v).is_integer() else f"{v:.3g}"


def extract_matrices(ram: RamModel) -> dict:
    """Cell layouts of A, S, F (and M) as string grids.

    Free cells show their 1-based parameter id; fixed cells their constant.
    The returned dict also carries a ``"text"`` rendering.
    """
    A = [[_fmt_const(v) for v in row] for row in ram.A0]
    S = [[_fmt_const(v) for v in row] for row in ram.S0]
    M = None if ram.M0 is None else [_fmt_const(v) for v in ram.M0]
    for prm in ram.params:
        if prm.matrix == "A":
            A[prm.row][prm.col] = str(prm.pid)
        elif prm.matrix == "S":
            S[prm.row][prm.col] = S[prm.col][prm.row] = str(prm.pid)
        else:
            M[prm.row] = str(prm.pid)
    F = [[_fmt_const(v) for v in row] for row in ram.F]
    width = max(len(n) for n in ram.names) + 1
    width = max(width, max(len(c) for grid in (A, S) for row in grid for c in row) + 1)
    parts = ["A", _render(A, ram.names, width), "", "S", _render(S, ram.names, width), "",
             "F", "\n".join([" " * width + "".join(f"{n:>{width}}" for n in ram.names)]
                            + [f"{n:<{width}}" + "".join(f"{c:>{width}}" for c in row)
                               for n, row in zip(ram.obs_names, F)])]
    if M is not None:
        parts += ["", "M", " ".join(f"{n}={c}" for n, c in zip(ram.names, M))]
    return {"A": A, "S": S, "F": F, "M": M, "text": "\n".join(parts)}
