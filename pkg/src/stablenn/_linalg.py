"""Compiled Cholesky primitives.

Factors are stored *upper* triangular (``A = U.T @ U``) so that every inner
loop runs along contiguous rows.
"""

import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)


@njit(cache=True)
def chol_upper(a, u):
    """Write the upper Cholesky factor of ``a`` into ``u``; False if not PD."""
    n = a.shape[0]
    for i in range(n):
        for j in range(n):
            u[i, j] = a[i, j] if j >= i else 0.0
    for k in range(n):
        d = u[k, k]
        if not d > 0.0 or not np.isfinite(d):
            return False
        d = math.sqrt(d)
        u[k, k] = d
        for j in range(k + 1, n):
            u[k, j] /= d
        for i in range(k + 1, n):
            f = u[k, i]
            if f != 0.0:
                for j in range(i, n):
                    u[i, j] -= f * u[k, j]
    return True


@njit(cache=True)
def chol_upper_jitter(a, u):
    """``chol_upper`` with one retry after adding 1e-10 * mean(diag) to the diagonal."""
    if chol_upper(a, u):
        return True
    n = a.shape[0]
    bump = 0.0
    for i in range(n):
        bump += a[i, i]
    bump = 1e-10 * bump / max(n, 1)
    b = a.copy()
    for i in range(n):
        b[i, i] += bump
    return chol_upper(b, u)


@njit(cache=True)
def solve_lower_t(u, b, out):
    """Solve ``u.T @ out = b`` by forward substitution."""
    n = u.shape[0]
    for i in range(n):
        out[i] = b[i]
    for k in range(n):
        z = out[k] / u[k, k]
        out[k] = z
        if z != 0.0:
            for j in range(k + 1, n):
                out[j] -= u[k, j] * z


@njit(cache=True)
def chol_rank1(u, x, sign):
    """In place: ``u.T u + sign * x x.T``; ``x`` is overwritten. False on breakdown."""
    n = u.shape[0]
    for k in range(n):
        ukk = u[k, k]
        r2 = ukk * ukk + sign * x[k] * x[k]
        if not r2 > 0.0:
            return False
        r = math.sqrt(r2)
        c = r / ukk
        s = x[k] / ukk
        u[k, k] = r
        for j in range(k + 1, n):
            u[k, j] = (u[k, j] + sign * s * x[j]) / c
            x[j] = c * x[j] - s * u[k, j]
    return True


@njit(cache=True)
def log_det_upper(u):
    acc = 0.0
    for i in range(u.shape[0]):
        acc += math.log(u[i, i])
    return 2.0 * acc


@njit(cache=True)
def gauss_loglik(u, y, work):
    """log N(y; 0, u.T u) via one triangular solve."""
    n = y.shape[0]
    solve_lower_t(u, y, work)
    quad = 0.0
    for i in range(n):
        quad += work[i] * work[i]
    return -0.5 * n * LOG_2PI - 0.5 * log_det_upper(u) - 0.5 * quad
