"""Pure numpy kernels; used when the compiled extension is unavailable.

Cell arrays describe the free cells of the RAM matrices: ``cmat`` is 0 for
A, 1 for S and 2 for M; S cells are stored once with ``row <= col``.
"""
import numpy as np

INF = float("inf")

# penalty codes shared with the compiled kernels
NONE, LASSO, RIDGE, ENET, ALASSO, SCAD, MCP = range(7)


def fill_matrices(theta, A0, S0, M0, cmat, crow, ccol, cpid):
    A = A0.copy()
    S = S0.copy()
    M = None if M0 is None else M0.copy()
    vals = theta[cpid]
    a = cmat == 0
    A[crow[a], ccol[a]] = vals[a]
    s = cmat == 1
    S[crow[s], ccol[s]] = vals[s]
    S[ccol[s], crow[s]] = vals[s]
    if M is not None:
        mm = cmat == 2
        M[crow[mm]] = vals[mm]
    return A, S, M


def ml_value_grad(A, S, M, n_obs, C, m, logdet_c, cmat, crow, ccol, cpid, q, want_grad):
    """ML discrepancy (and gradient) for RAM matrices.

    Observed variables occupy the first ``n_obs`` rows of the model. Returns
    ``(inf, None)`` when I - A is singular or the implied covariance is not
    positive definite.
    """
    t = A.shape[0]
    p = n_obs
    try:
        B = np.linalg.inv(np.eye(t) - A)
    except np.linalg.LinAlgError:
        return INF, None
    if not np.all(np.isfinite(B)):
        return INF, None
    G = B[:p]
    sigma = G @ S @ G.T
    sigma = 0.5 * (sigma + sigma.T)
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        return INF, None
    logdet = 2.0 * np.log(np.diag(L)).sum()
    Linv = np.linalg.inv(L)
    sinv = Linv.T @ Linv
    value = logdet + np.sum(C * sinv) - logdet_c - p
    a = None
    if M is not None:
        d = m - G @ M
        a = sinv @ d
        value += d @ a
    if not want_grad:
        return value, None
    W = sinv - sinv @ C @ sinv
    if a is not None:
        W -= np.outer(a, a)
    GW = G.T @ W @ G
    K = B @ S @ GW
    grad = np.zeros(q)
    isA = cmat == 0
    np.add.at(grad, cpid[isA], 2.0 * K[ccol[isA], crow[isA]])
    isS = cmat == 1
    diag = crow == ccol
    np.add.at(grad, cpid[isS], np.where(diag[isS], 1.0, 2.0) * GW[crow[isS], ccol[isS]])
    if a is not None:
        h = G.T @ a
        BM = B @ M
        np.add.at(grad, cpid[isA], -2.0 * h[crow[isA]] * BM[ccol[isA]])
        isM = cmat == 2
        np.add.at(grad, cpid[isM], -2.0 * h[crow[isM]])
    return value, grad


def soft(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def prox_vec(z, step, lam, kind, alpha, gamma, weights):
    """Elementwise argmin of 0.5*(x - z)**2 + step * pen(x).

    ``weights`` scales the threshold per element (adaptive lasso).
    """
    z = np.asarray(z, dtype=float)
    t = step * lam
    if kind == NONE or t == 0.0:
        return z.copy()
    if kind == LASSO:
        return soft(z, t)
    if kind == ALASSO:
        return soft(z, t * weights)
    if kind == RIDGE:
        return z / (1.0 + 2.0 * t)
    if kind == ENET:
        return soft(z, t * alpha) / (1.0 + 2.0 * t * (1.0 - alpha))
    out = np.empty_like(z)
    for i, zi in enumerate(z):
        out[i] = prox_scalar(zi, step, lam, kind, gamma)
    return out


def _scad_value(x, lam, gamma):
    ax = abs(x)
    if ax <= lam:
        return lam * ax
    if ax <= gamma * lam:
        return (2.0 * gamma * lam * ax - ax * ax - lam * lam) / (2.0 * (gamma - 1.0))
    return lam * lam * (gamma + 1.0) / 2.0


def _mcp_value(x, lam, gamma):
    ax = abs(x)
    if ax <= gamma * lam:
        return lam * ax - ax * ax / (2.0 * gamma)
    return gamma * lam * lam / 2.0


def prox_scalar(z, step, lam, kind, gamma):
    """SCAD / MCP proximal map for one coordinate."""
    az = abs(z)
    sgn = 1.0 if z >= 0 else -1.0
    if kind == SCAD:
        if gamma > 1.0 + step:
            if az <= lam * (1.0 + step):
                return sgn * max(az - step * lam, 0.0)
            if az <= gamma * lam:
                return ((gamma - 1.0) * z - sgn * step * gamma * lam) / (gamma - 1.0 - step)
            return z
        value = _scad_value
    else:
        if gamma > step:
            if az <= gamma * lam:
                return sgn * max(az - step * lam, 0.0) / (1.0 - step / gamma)
            return z
        value = _mcp_value
    # concave subproblem: the minimizer is one of the piecewise candidates
    cands = [0.0, z, sgn * max(az - step * lam, 0.0), sgn * lam, sgn * gamma * lam]
    best, best_obj = 0.0, INF
    for c in cands:
        if c * z < 0:
            continue
        obj = 0.5 * (c - z) ** 2 + step * value(c, lam, gamma)
        if obj < best_obj:
            best, best_obj = c, obj
    return best


def penalty_value(x, lam, kind, alpha, gamma, weights):
    x = np.asarray(x, dtype=float)
    if kind == NONE or lam == 0.0:
        return 0.0
    if kind == LASSO:
        return lam * np.abs(x).sum()
    if kind == ALASSO:
        return lam * (weights * np.abs(x)).sum()
    if kind == RIDGE:
        return lam * (x * x).sum()
    if kind == ENET:
        return lam * ((1.0 - alpha) * (x * x).sum() + alpha * np.abs(x).sum())
    f = _scad_value if kind == SCAD else _mcp_value
    return float(sum(f(xi, lam, gamma) for xi in x))
