# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot kernels in ``_pykernels``.

Same signatures and results as the numpy fallback; the dense algebra runs
without the GIL on small matrices where numpy call overhead dominates.
"""
import numpy as np
from libc.math cimport log, fabs, INFINITY

cdef enum:
    NONE = 0
    LASSO = 1
    RIDGE = 2
    ENET = 3
    ALASSO = 4
    SCAD = 5
    MCP = 6


cdef int _invert(double[:, ::1] M, double[:, ::1] out, Py_ssize_t n) noexcept nogil:
    # Gauss-Jordan with partial pivoting; M is overwritten
    cdef Py_ssize_t i, j, k, piv
    cdef double big, tmp, f
    for i in range(n):
        for j in range(n):
            out[i, j] = 1.0 if i == j else 0.0
    for k in range(n):
        piv = k
        big = fabs(M[k, k])
        for i in range(k + 1, n):
            if fabs(M[i, k]) > big:
                big = fabs(M[i, k])
                piv = i
        if big < 1e-13:
            return -1
        if piv != k:
            for j in range(n):
                tmp = M[k, j]; M[k, j] = M[piv, j]; M[piv, j] = tmp
                tmp = out[k, j]; out[k, j] = out[piv, j]; out[piv, j] = tmp
        f = 1.0 / M[k, k]
        for j in range(n):
            M[k, j] *= f
            out[k, j] *= f
        for i in range(n):
            if i != k:
                f = M[i, k]
                if f != 0.0:
                    for j in range(n):
                        M[i, j] -= f * M[k, j]
                        out[i, j] -= f * out[k, j]
    return 0


cdef int _cholesky(double[:, ::1] S, double[:, ::1] L, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(n):
            L[i, j] = 0.0
    for j in range(n):
        acc = S[j, j]
        for k in range(j):
            acc -= L[j, k] * L[j, k]
        if not (acc > 0.0):
            return -1
        L[j, j] = acc ** 0.5
        for i in range(j + 1, n):
            acc = S[i, j]
            for k in range(j):
                acc -= L[i, k] * L[j, k]
            L[i, j] = acc / L[j, j]
    return 0


cdef void _tril_inverse(double[:, ::1] L, double[:, ::1] out, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double acc
    for i in range(n):
        for j in range(n):
            out[i, j] = 0.0
    for j in range(n):
        out[j, j] = 1.0 / L[j, j]
        for i in range(j + 1, n):
            acc = 0.0
            for k in range(j, i):
                acc -= L[i, k] * out[k, j]
            out[i, j] = acc / L[i, i]


cdef void _matmul(double[:, ::1] X, double[:, ::1] Y, double[:, ::1] out,
                  Py_ssize_t n, Py_ssize_t m, Py_ssize_t r) noexcept nogil:
    # out (n x r) = X (n x m) @ Y (m x r)
    cdef Py_ssize_t i, j, k
    cdef double x
    for i in range(n):
        for j in range(r):
            out[i, j] = 0.0
        for k in range(m):
            x = X[i, k]
            if x != 0.0:
                for j in range(r):
                    out[i, j] += x * Y[k, j]


def ml_value_grad(double[:, ::1] A, double[:, ::1] S, M, Py_ssize_t n_obs,
                  double[:, ::1] C, m, double logdet_c,
                  Py_ssize_t[::1] cmat, Py_ssize_t[::1] crow, Py_ssize_t[::1] ccol,
                  Py_ssize_t[::1] cpid, Py_ssize_t q, bint want_grad):
    cdef Py_ssize_t t = A.shape[0], p = n_obs
    cdef Py_ssize_t i, j, k, c, r, col
    cdef double value = 0.0, logdet = 0.0, acc
    cdef bint has_mean = M is not None
    cdef double[::1] Mv, mv

    cdef double[:, ::1] IA = np.empty((t, t))
    cdef double[:, ::1] B = np.empty((t, t))
    cdef double[:, ::1] GS = np.empty((p, t))
    cdef double[:, ::1] Sig = np.empty((p, p))
    cdef double[:, ::1] L = np.empty((p, p))
    cdef double[:, ::1] Li = np.empty((p, p))
    cdef double[:, ::1] Si = np.empty((p, p))
    cdef double[::1] d = np.zeros(p)
    cdef double[::1] a = np.zeros(p)
    cdef int status

    if has_mean:
        Mv = M
        mv = m

    with nogil:
        for i in range(t):
            for j in range(t):
                IA[i, j] = (1.0 if i == j else 0.0) - A[i, j]
        status = _invert(IA, B, t)
        if status == 0:
            # G = B[:p]; Sigma = G S G'
            _matmul(B, S, GS, p, t, t)
            for i in range(p):
                for j in range(i + 1):
                    acc = 0.0
                    for k in range(t):
                        acc += GS[i, k] * B[j, k]
                    Sig[i, j] = acc
                    Sig[j, i] = acc
            status = _cholesky(Sig, L, p)
        if status == 0:
            for i in range(p):
                logdet += 2.0 * log(L[i, i])
            _tril_inverse(L, Li, p)
            for i in range(p):
                for j in range(i + 1):
                    acc = 0.0
                    for k in range(i, p):
                        acc += Li[k, i] * Li[k, j]
                    Si[i, j] = acc
                    Si[j, i] = acc
            value = logdet - logdet_c - p
            for i in range(p):
                for j in range(p):
                    value += C[i, j] * Si[i, j]
            if has_mean:
                for i in range(p):
                    acc = 0.0
                    for k in range(t):
                        acc += B[i, k] * Mv[k]
                    d[i] = mv[i] - acc
                for i in range(p):
                    acc = 0.0
                    for j in range(p):
                        acc += Si[i, j] * d[j]
                    a[i] = acc
                    value += d[i] * acc
    if status != 0:
        return INFINITY, None
    if not want_grad:
        return value, None

    cdef double[:, ::1] CS = np.empty((p, p))
    cdef double[:, ::1] W = np.empty((p, p))
    cdef double[:, ::1] WG = np.empty((p, t))
    cdef double[:, ::1] GW = np.empty((t, t))
    cdef double[:, ::1] BS = np.empty((t, t))
    cdef double[:, ::1] K = np.empty((t, t))
    cdef double[::1] h = np.zeros(t)
    cdef double[::1] BM = np.zeros(t)
    grad_arr = np.zeros(q)
    cdef double[::1] grad = grad_arr

    with nogil:
        _matmul(C, Si, CS, p, p, p)
        _matmul(Si, CS, W, p, p, p)
        for i in range(p):
            for j in range(p):
                W[i, j] = Si[i, j] - W[i, j] - a[i] * a[j]
        _matmul(W, B, WG, p, p, t)  # first p rows of B are G
        for i in range(t):
            for j in range(t):
                acc = 0.0
                for k in range(p):
                    acc += B[k, i] * WG[k, j]
                GW[i, j] = acc
        _matmul(B, S, BS, t, t, t)
        _matmul(BS, GW, K, t, t, t)
        if has_mean:
            for i in range(t):
                acc = 0.0
                for k in range(p):
                    acc += B[k, i] * a[k]
                h[i] = acc
                acc = 0.0
                for k in range(t):
                    acc += B[i, k] * Mv[k]
                BM[i] = acc
        for c in range(cmat.shape[0]):
            r = crow[c]
            col = ccol[c]
            if cmat[c] == 0:
                grad[cpid[c]] += 2.0 * K[col, r]
                if has_mean:
                    grad[cpid[c]] -= 2.0 * h[r] * BM[col]
            elif cmat[c] == 1:
                if r == col:
                    grad[cpid[c]] += GW[r, col]
                else:
                    grad[cpid[c]] += 2.0 * GW[r, col]
            else:
                grad[cpid[c]] -= 2.0 * h[r]
    return value, grad_arr


cdef inline double _sign(double z) noexcept nogil:
    return 1.0 if z >= 0 else -1.0


cdef inline double _soft(double z, double t) noexcept nogil:
    cdef double az = fabs(z) - t
    return _sign(z) * az if az > 0 else 0.0


cdef double _scad_value(double x, double lam, double gamma) noexcept nogil:
    cdef double ax = fabs(x)
    if ax <= lam:
        return lam * ax
    if ax <= gamma * lam:
        return (2.0 * gamma * lam * ax - ax * ax - lam * lam) / (2.0 * (gamma - 1.0))
    return lam * lam * (gamma + 1.0) / 2.0


cdef double _mcp_value(double x, double lam, double gamma) noexcept nogil:
    cdef double ax = fabs(x)
    if ax <= gamma * lam:
        return lam * ax - ax * ax / (2.0 * gamma)
    return gamma * lam * lam / 2.0


cdef double _prox_nonconvex(double z, double step, double lam, int kind, double gamma) noexcept nogil:
    cdef double az = fabs(z), sg = _sign(z)
    cdef double cands[5]
    cdef double best = 0.0, best_obj = INFINITY, obj, cval
    cdef int i
    if kind == SCAD:
        if gamma > 1.0 + step:
            if az <= lam * (1.0 + step):
                return _soft(z, step * lam)
            if az <= gamma * lam:
                return ((gamma - 1.0) * z - sg * step * gamma * lam) / (gamma - 1.0 - step)
            return z
    else:
        if gamma > step:
            if az <= gamma * lam:
                return _soft(z, step * lam) / (1.0 - step / gamma)
            return z
    cands[0] = 0.0
    cands[1] = z
    cands[2] = _soft(z, step * lam)
    cands[3] = sg * lam
    cands[4] = sg * gamma * lam
    for i in range(5):
        cval = cands[i]
        if cval * z < 0:
            continue
        if kind == SCAD:
            obj = 0.5 * (cval - z) * (cval - z) + step * _scad_value(cval, lam, gamma)
        else:
            obj = 0.5 * (cval - z) * (cval - z) + step * _mcp_value(cval, lam, gamma)
        if obj < best_obj:
            best = cval
            best_obj = obj
    return best


def prox_scalar(double z, double step, double lam, int kind, double gamma):
    return _prox_nonconvex(z, step, lam, kind, gamma)


def prox_vec(z, double step, double lam, int kind, double alpha, double gamma, weights):
    zarr = np.ascontiguousarray(z, dtype=np.float64)
    out_arr = np.empty_like(zarr)
    cdef double[::1] zv = zarr
    cdef double[::1] out = out_arr
    cdef double[::1] w
    cdef Py_ssize_t i, n = zv.shape[0]
    cdef double t = step * lam
    if kind == ALASSO:
        w = np.ascontiguousarray(weights, dtype=np.float64)
    with nogil:
        for i in range(n):
            if kind == NONE or t == 0.0:
                out[i] = zv[i]
            elif kind == LASSO:
                out[i] = _soft(zv[i], t)
            elif kind == ALASSO:
                out[i] = _soft(zv[i], t * w[i])
            elif kind == RIDGE:
                out[i] = zv[i] / (1.0 + 2.0 * t)
            elif kind == ENET:
                out[i] = _soft(zv[i], t * alpha) / (1.0 + 2.0 * t * (1.0 - alpha))
            else:
                out[i] = _prox_nonconvex(zv[i], step, lam, kind, gamma)
    return out_arr


def penalty_value(x, double lam, int kind, double alpha, double gamma, weights):
    xarr = np.ascontiguousarray(x, dtype=np.float64)
    cdef double[::1] xv = xarr
    cdef double[::1] w
    cdef Py_ssize_t i, n = xv.shape[0]
    cdef double total = 0.0, ax
    if kind == NONE or lam == 0.0:
        return 0.0
    if kind == ALASSO:
        w = np.ascontiguousarray(weights, dtype=np.float64)
    with nogil:
        for i in range(n):
            ax = fabs(xv[i])
            if kind == LASSO:
                total += lam * ax
            elif kind == ALASSO:
                total += lam * w[i] * ax
            elif kind == RIDGE:
                total += lam * ax * ax
            elif kind == ENET:
                total += lam * ((1.0 - alpha) * ax * ax + alpha * ax)
            elif kind == SCAD:
                total += _scad_value(ax, lam, gamma)
            else:
                total += _mcp_value(ax, lam, gamma)
    return total


def fill_matrices(theta, A0, S0, M0, Py_ssize_t[::1] cmat, Py_ssize_t[::1] crow,
                  Py_ssize_t[::1] ccol, Py_ssize_t[::1] cpid):
    A_arr = np.array(A0, dtype=np.float64, order="C")
    S_arr = np.array(S0, dtype=np.float64, order="C")
    M_arr = None if M0 is None else np.array(M0, dtype=np.float64)
    cdef double[:, ::1] Av = A_arr
    cdef double[:, ::1] Sv = S_arr
    cdef double[::1] Mv
    cdef double[::1] th = np.ascontiguousarray(theta, dtype=np.float64)
    cdef Py_ssize_t c, r, col
    cdef double v
    if M_arr is not None:
        Mv = M_arr
    for c in range(cmat.shape[0]):
        r = crow[c]
        col = ccol[c]
        v = th[cpid[c]]
        if cmat[c] == 0:
            Av[r, col] = v
        elif cmat[c] == 1:
            Sv[r, col] = v
            Sv[col, r] = v
        else:
            Mv[r] = v
    return A_arr, S_arr, M_arr
