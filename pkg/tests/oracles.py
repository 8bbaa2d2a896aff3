"""Independent reference implementations used to validate the solvers.

Everything here is deliberately naive: direct summation, explicit
elimination, exhaustive enumeration, first-order convex iterations. None of
it shares code with the package internals.
"""

import numpy as np
from numba import njit


def affine_fit_direct(p, y, w=None):
    """Affine LSQ by direct normal equations and 2x2 elimination.

    Returns (a, b, eps) with eps the explicitly summed residual.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = np.ones_like(p) if w is None else np.asarray(w, dtype=np.float64)
    if p.size == 1:
        return 0.0, float(y[0]), 0.0
    E = float(np.sum(w * p * p))
    G = float(np.sum(w * p))
    H = float(np.sum(w))
    I = float(np.sum(w * y * p))
    J = float(np.sum(w * y))
    # eliminate a from the second equation (E > 0 since p >= 1)
    m = G / E
    h2 = H - m * G
    j2 = J - m * I
    if h2 == 0.0:
        a = 0.0
        b = J / H
    else:
        b = j2 / h2
        a = (I - G * b) / E
    eps = float(np.sum(w * (a * p + b - y) ** 2))
    return a, b, eps


def interval_error_table(values, w=None):
    """eps[(l, r)] = summed-over-channels direct affine residual, 1-based."""
    n, T = values.shape
    p = np.arange(1, n + 1, dtype=np.float64)
    eps = {}
    for l in range(1, n + 1):
        for r in range(l, n + 1):
            s = 0.0
            for t in range(T):
                ws = None if w is None else w[l - 1:r]
                _, _, e = affine_fit_direct(p[l - 1:r], values[l - 1:r, t], ws)
                s += e
            eps[(l, r)] = s
    return eps


def exhaustive_potts(values, kappa, w=None):
    """Minimum partition energy by enumerating all 2^(n-1) partitions.

    Returns (energy, breakpoints) where breakpoints are the right endpoints
    of all intervals but the last, for the first optimum in mask order.
    """
    n = values.shape[0]
    eps = interval_error_table(values, w)
    best = np.inf
    best_bp = None
    for mask in range(1 << (n - 1)):
        bps = [i + 1 for i in range(n - 1) if (mask >> i) & 1]
        bounds = [0] + bps + [n]
        energy = kappa * len(bps)
        for a, b in zip(bounds[:-1], bounds[1:]):
            energy += eps[(a + 1, b)]
        if energy < best - 1e-15:
            best = energy
            best_bp = tuple(bps)
    return best, best_bp


@njit(cache=True)
def tv_denoise_pg(y, lam, max_iters=500000, tol=1e-13):
    """1D TV-L2 denoising by projected gradient on the dual box problem."""
    n = y.shape[0]
    x = y.copy()
    if n == 1 or lam <= 0.0:
        return x
    m = n - 1
    u = np.zeros(m)
    step = 0.25  # 1 / ||D D^T||, spectral norm < 4
    for _ in range(max_iters):
        # x = y - D^T u
        x[0] = y[0] + u[0]
        for i in range(1, n - 1):
            x[i] = y[i] - (u[i - 1] - u[i])
        x[n - 1] = y[n - 1] - u[m - 1]
        # gradient step on u then project onto the lam-box
        delta = 0.0
        for i in range(m):
            v = u[i] + step * (x[i + 1] - x[i])
            if v > lam:
                v = lam
            elif v < -lam:
                v = -lam
            d = abs(v - u[i])
            if d > delta:
                delta = d
            u[i] = v
        if delta < tol:
            break
    x[0] = y[0] + u[0]
    for i in range(1, n - 1):
        x[i] = y[i] - (u[i - 1] - u[i])
    x[n - 1] = y[n - 1] - u[m - 1]
    return x


def prox_objective_grid(gx, gy, it, center, beta, half_width=3.0, step=1e-3, chunk=512):
    """Brute-force minimum of |gx*u+gy*v+it| + (beta/2)((u-cu)^2+(v-cv)^2).

    Scans the square grid center + [-half_width, half_width]^2 and returns
    (best value, (u, v)). Chunked over rows to bound memory.
    """
    cu, cv = center
    ax = np.arange(-half_width, half_width + step / 2, step)
    us = cu + ax
    vs = cv + ax
    best = np.inf
    arg = (cu, cv)
    for s in range(0, len(vs), chunk):
        vblock = vs[s:s + chunk]
        lin = np.abs(gx * us[None, :] + gy * vblock[:, None] + it)
        quad = 0.5 * beta * ((us[None, :] - cu) ** 2 + (vblock[:, None] - cv) ** 2)
        f = lin + quad
        k = np.argmin(f)
        val = f.flat[k]
        if val < best:
            best = float(val)
            iy, ix = np.unravel_index(k, f.shape)
            arg = (float(us[ix]), float(vblock[iy]))
    return best, arg
