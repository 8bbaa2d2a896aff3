"""Numba kernels for the line solvers and per-pixel filters.

These are private: public contracts live in potts1d, regularizer and pyramid.
All kernels are pure functions of their arguments and release the GIL, so
callers may run them concurrently on disjoint outputs.
"""

from __future__ import annotations

import numpy as np
from numba import njit

# Relative guard on the normal-equations determinant; below it the affine fit
# degenerates to the weighted-constant fit (prefix-sum cancellation on long
# lines can produce tiny negative determinants).
DET_GUARD = 1e-12


@njit(cache=True, nogil=True)
def prefix_moments(g, wts, ep, gp, hp, ip, jp, kp):
    """Inclusive prefix sums of the interval moments, index 0 = 0.

    ``g`` is (n, T) line data with abscissae p = 1..n and sample weights
    ``wts``. Interval moments over l..r are then O(1) prefix differences.
    """
    n, T = g.shape
    ep[0] = 0.0
    gp[0] = 0.0
    hp[0] = 0.0
    for t in range(T):
        ip[0, t] = 0.0
        jp[0, t] = 0.0
        kp[0, t] = 0.0
    for p in range(1, n + 1):
        w = wts[p - 1]
        pf = float(p)
        ep[p] = ep[p - 1] + w * pf * pf
        gp[p] = gp[p - 1] + w * pf
        hp[p] = hp[p - 1] + w
        for t in range(T):
            gv = g[p - 1, t]
            ip[p, t] = ip[p - 1, t] + w * gv * pf
            jp[p, t] = jp[p - 1, t] + w * gv
            kp[p, t] = kp[p - 1, t] + w * gv * gv


@njit(cache=True, nogil=True)
def interval_fit_channel(ep, gp, hp, ip, jp, kp, l, r, t):
    """Weighted affine least squares on one channel of interval l..r.

    Returns ``(a, b, eps)`` minimizing sum of w_p (a p + b - g_pt)^2. A
    single sample (or a degenerate determinant) falls back to the constant
    fit a = 0, b = weighted mean, with the corresponding residual.
    """
    e = ep[r] - ep[l - 1]
    g = gp[r] - gp[l - 1]
    h = hp[r] - hp[l - 1]
    iv = ip[r, t] - ip[l - 1, t]
    jv = jp[r, t] - jp[l - 1, t]
    kv = kp[r, t] - kp[l - 1, t]
    det = e * h - g * g
    scale = max(abs(e * h), g * g, 1.0)
    if r == l or det <= DET_GUARD * scale:
        b = jv / h
        eps = kv - b * jv
        if r == l or eps < 0.0:
            eps = 0.0
        return 0.0, b, eps
    a = (iv * h - g * jv) / det
    b = (e * jv - iv * g) / det
    eps = kv - a * iv - b * jv
    if eps < 0.0:
        eps = 0.0
    return a, b, eps


@njit(cache=True, nogil=True)
def _interval_eps_sum(ep, gp, hp, ip, jp, kp, l, r, T):
    s = 0.0
    for t in range(T):
        a, b, eps = interval_fit_channel(ep, gp, hp, ip, jp, kp, l, r, t)
        s += eps
    return s


@njit(cache=True, nogil=True)
def dp_forward(ep, gp, hp, ip, jp, kp, n, T, kappa, prune, B, jump, cand, lbound, nevals):
    """Bellman pass of the penalized partition problem.

    ``B[r]`` is the optimal energy of the prefix 1..r with ``B[0] = -kappa``;
    ``jump[r]`` the left boundary of the last interval in an optimal
    partition (ties broken toward the smallest boundary). ``nevals[r-1]``
    records how many candidate boundaries had their interval error evaluated
    at step r (pruning diagnostic; with pruning off it is exactly r).

    Pruning discards a candidate l only when it is provably dominated at the
    current and every later position, so energies and backtracked boundaries
    are identical with pruning on or off.
    """
    B[0] = -kappa
    ncand = 0
    for r in range(1, n + 1):
        cand[ncand] = r
        lbound[ncand] = B[r - 1]
        ncand += 1
        best = np.inf
        arg = r
        nev = 0
        for ci in range(ncand):
            l = cand[ci]
            lb = B[l - 1] + kappa
            if prune and lb >= best:
                continue
            val = lb + _interval_eps_sum(ep, gp, hp, ip, jp, kp, l, r, T)
            lbound[ci] = val - kappa
            nev += 1
            if val < best:
                best = val
                arg = l
        B[r] = best
        jump[r] = arg
        nevals[r - 1] = nev
        if prune:
            keep = 0
            for ci in range(ncand):
                if lbound[ci] <= B[r]:
                    cand[keep] = cand[ci]
                    lbound[keep] = lbound[ci]
                    keep += 1
            ncand = keep
    return ncand


@njit(cache=True, nogil=True)
def dp_line(g, wts, kappa, prune):
    """Run the full DP on one line; returns (B, jump, nevals)."""
    n, T = g.shape
    ep = np.empty(n + 1)
    gp = np.empty(n + 1)
    hp = np.empty(n + 1)
    ip = np.empty((n + 1, T))
    jp = np.empty((n + 1, T))
    kp = np.empty((n + 1, T))
    prefix_moments(g, wts, ep, gp, hp, ip, jp, kp)
    B = np.empty(n + 1)
    jump = np.zeros(n + 1, dtype=np.int64)
    cand = np.empty(n, dtype=np.int64)
    lbound = np.empty(n)
    nevals = np.zeros(n, dtype=np.int64)
    dp_forward(ep, gp, hp, ip, jp, kp, n, T, kappa, prune, B, jump, cand, lbound, nevals)
    return B, jump, nevals


@njit(cache=True, nogil=True)
def solve_lines_affine(values, offsets, kappa, prune, out):
    """Solve the coupled affine Potts problem on a batch of lines.

    ``values`` is (total, T) with lines concatenated per ``offsets``
    (length L+1); fitted values a*p + b of the optimal segmentation of each
    line are written to ``out`` (same layout). Used as the z-update hot path.
    """
    L = offsets.shape[0] - 1
    T = values.shape[1]
    nmax = 0
    for i in range(L):
        ln = offsets[i + 1] - offsets[i]
        if ln > nmax:
            nmax = ln
    ep = np.empty(nmax + 1)
    gp = np.empty(nmax + 1)
    hp = np.empty(nmax + 1)
    ip = np.empty((nmax + 1, T))
    jp = np.empty((nmax + 1, T))
    kp = np.empty((nmax + 1, T))
    B = np.empty(nmax + 1)
    jump = np.zeros(nmax + 1, dtype=np.int64)
    cand = np.empty(max(nmax, 1), dtype=np.int64)
    lbound = np.empty(max(nmax, 1))
    nevals = np.zeros(max(nmax, 1), dtype=np.int64)
    wts = np.ones(max(nmax, 1))
    for i in range(L):
        s = offsets[i]
        n = offsets[i + 1] - s
        g = values[s:s + n]
        prefix_moments(g, wts[:n], ep[:n + 1], gp[:n + 1], hp[:n + 1],
                       ip[:n + 1], jp[:n + 1], kp[:n + 1])
        dp_forward(ep, gp, hp, ip, jp, kp, n, T, kappa, prune,
                   B, jump, cand, lbound, nevals)
        r = n
        while r >= 1:
            l = jump[r]
            for t in range(T):
                a, b, eps = interval_fit_channel(ep, gp, hp, ip, jp, kp, l, r, t)
                for p in range(l, r + 1):
                    out[s + p - 1, t] = a * p + b
            r = l - 1


@njit(cache=True, nogil=True)
def tv_condat(y, lam, x):
    """Exact 1D TV-L2 denoising (taut string, direct single-pass algorithm).

    Writes to ``x`` the minimizer of lam*sum|x_{p+1}-x_p| + 0.5*sum(x_p-y_p)^2.
    Tracks a lower and an upper candidate segment value (vmin/vmax) plus the
    running string slacks (umin/umax); a violated slack validates a segment
    and restarts after it.
    """
    n = y.shape[0]
    if n == 1 or lam <= 0.0:
        for i in range(n):
            x[i] = y[i]
        return
    k = 0
    k0 = 0
    km = 0
    kp = 0
    vmin = y[0] - lam
    vmax = y[0] + lam
    umin = lam
    umax = -lam
    while True:
        if k == n - 1:
            # single-point remainder after a tail restart
            x[k] = vmin + umin
            return
        while k < n - 1:
            if y[k + 1] + umin < vmin - lam:
                # negative jump: freeze the segment at vmin
                for i in range(k0, km + 1):
                    x[i] = vmin
                k = km + 1
                k0 = k
                km = k
                kp = k
                vmin = y[k]
                vmax = y[k] + 2.0 * lam
                umin = lam
                umax = -lam
            elif y[k + 1] + umax > vmax + lam:
                # positive jump: freeze the segment at vmax
                for i in range(k0, kp + 1):
                    x[i] = vmax
                k = kp + 1
                k0 = k
                km = k
                kp = k
                vmin = y[k] - 2.0 * lam
                vmax = y[k]
                umin = lam
                umax = -lam
            else:
                k += 1
                umin += y[k] - vmin
                umax += y[k] - vmax
                if umin >= lam:
                    vmin += (umin - lam) / (k - k0 + 1)
                    umin = lam
                    km = k
                if umax <= -lam:
                    vmax += (umax + lam) / (k - k0 + 1)
                    umax = -lam
                    kp = k
        # tail handling at k == n-1
        if umin < 0.0:
            for i in range(k0, km + 1):
                x[i] = vmin
            k = km + 1
            k0 = k
            km = k
            vmin = y[k]
            umin = lam
            umax = y[k] + lam - vmax
        elif umax > 0.0:
            for i in range(k0, kp + 1):
                x[i] = vmax
            k = kp + 1
            k0 = k
            kp = k
            vmax = y[k]
            umax = -lam
            umin = y[k] - lam - vmin
        else:
            v = vmin + umin / (k - k0 + 1)
            for i in range(k0, n):
                x[i] = v
            return


@njit(cache=True, nogil=True)
def solve_lines_tv(values, offsets, lam, out):
    """Taut-string TV denoising of each channel of each line in a batch."""
    L = offsets.shape[0] - 1
    T = values.shape[1]
    nmax = 0
    for i in range(L):
        ln = offsets[i + 1] - offsets[i]
        if ln > nmax:
            nmax = ln
    buf_y = np.empty(nmax)
    buf_x = np.empty(nmax)
    for i in range(L):
        s = offsets[i]
        n = offsets[i + 1] - s
        for t in range(T):
            for p in range(n):
                buf_y[p] = values[s + p, t]
            tv_condat(buf_y[:n], lam, buf_x[:n])
            for p in range(n):
                out[s + p, t] = buf_x[p]


@njit(cache=True, nogil=True)
def weighted_median_flow(flow, guide, radius, sigma, out):
    """Guide-weighted median of both flow components over square windows.

    Weights are exp(-(guide difference)^2 / (2 sigma^2)); windows truncate at
    the image border. The output value at each pixel is always one of the
    window's input values (selection filter).
    """
    H = guide.shape[0]
    W = guide.shape[1]
    wsz = (2 * radius + 1) * (2 * radius + 1)
    vals = np.empty(wsz)
    wgts = np.empty(wsz)
    svals = np.empty(wsz)
    swgts = np.empty(wsz)
    inv = 0.5 / (sigma * sigma)
    for yc in range(H):
        for xc in range(W):
            gc = guide[yc, xc]
            cnt = 0
            y0 = max(0, yc - radius)
            y1 = min(H - 1, yc + radius)
            x0 = max(0, xc - radius)
            x1 = min(W - 1, xc + radius)
            for c in range(2):
                cnt = 0
                total = 0.0
                for yy in range(y0, y1 + 1):
                    for xx in range(x0, x1 + 1):
                        d = guide[yy, xx] - gc
                        w = np.exp(-d * d * inv)
                        vals[cnt] = flow[yy, xx, c]
                        wgts[cnt] = w
                        total += w
                        cnt += 1
                # insertion sort (windows are tiny)
                for a in range(cnt):
                    svals[a] = vals[a]
                    swgts[a] = wgts[a]
                for a in range(1, cnt):
                    v = svals[a]
                    w = swgts[a]
                    b = a - 1
                    while b >= 0 and svals[b] > v:
                        svals[b + 1] = svals[b]
                        swgts[b + 1] = swgts[b]
                        b -= 1
                    svals[b + 1] = v
                    swgts[b + 1] = w
                half = 0.5 * total
                acc = 0.0
                pick = cnt - 1
                for a in range(cnt):
                    acc += swgts[a]
                    if acc >= half:
                        pick = a
                        break
                out[yc, xc, c] = svals[pick]
