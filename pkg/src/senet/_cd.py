"""Cyclic coordinate descent for ``beta' G beta - 2 b' beta + 2 sum_j t_j |beta_j|``.

``G`` is the Gram matrix of the augmented design (data rows stacked over
``sqrt(lambda2) Q``), so ``G = X'WX + lambda2 * L`` and ``b = X'Wz``. The
coordinate minimizer is ``S(c_j, t_j) / G_jj`` with ``c_j = b_j - sum_{k!=j} G_jk beta_k``.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def _sweep(G, beta, resid, thresh, order, n_order):
    max_change = 0.0
    for idx in range(n_order):
        j = order[idx]
        gjj = G[j, j]
        old = beta[j]
        if gjj <= 0.0:
            new = 0.0
        else:
            c = resid[j] + gjj * old
            t = thresh[j]
            if c > t:
                new = (c - t) / gjj
            elif c < -t:
                new = (c + t) / gjj
            else:
                new = 0.0
        delta = new - old
        if delta != 0.0:
            beta[j] = new
            for k in range(G.shape[0]):
                resid[k] -= G[k, j] * delta
            ad = abs(delta)
            if ad > max_change:
                max_change = ad
    return max_change


@njit(cache=True)
def coordinate_descent(G, b, thresh, beta, max_sweeps, tol):
    """Minimize in place starting from ``beta``; returns ``(sweeps, converged)``.

    After every full sweep the solver cycles over the current nonzero set until
    it settles, then re-checks with a full sweep.
    """
    p = G.shape[0]
    resid = b - G @ beta
    full = np.arange(p)
    active = np.empty(p, dtype=np.int64)
    sweeps = 0
    while sweeps < max_sweeps:
        change = _sweep(G, beta, resid, thresh, full, p)
        sweeps += 1
        if change < tol:
            return sweeps, True
        n_act = 0
        for j in range(p):
            if beta[j] != 0.0:
                active[n_act] = j
                n_act += 1
        while sweeps < max_sweeps:
            change = _sweep(G, beta, resid, thresh, active, n_act)
            sweeps += 1
            if change < tol:
                break
    return sweeps, False


@njit(cache=True)
def _sweep_sparse(indptr, indices, vals, diag, beta, resid, thresh, order, n_order):
    max_change = 0.0
    for idx in range(n_order):
        j = order[idx]
        gjj = diag[j]
        old = beta[j]
        if gjj <= 0.0:
            new = 0.0
        else:
            c = resid[j] + gjj * old
            t = thresh[j]
            if c > t:
                new = (c - t) / gjj
            elif c < -t:
                new = (c + t) / gjj
            else:
                new = 0.0
        delta = new - old
        if delta != 0.0:
            beta[j] = new
            # G is symmetric, so row j doubles as column j
            for q in range(indptr[j], indptr[j + 1]):
                resid[indices[q]] -= vals[q] * delta
            ad = abs(delta)
            if ad > max_change:
                max_change = ad
    return max_change


@njit(cache=True)
def coordinate_descent_sparse(indptr, indices, vals, diag, b, thresh, beta, max_sweeps, tol):
    """Same iteration as :func:`coordinate_descent` for a symmetric CSR ``G``."""
    p = diag.shape[0]
    resid = b.copy()
    for j in range(p):
        for q in range(indptr[j], indptr[j + 1]):
            resid[j] -= vals[q] * beta[indices[q]]
    full = np.arange(p)
    active = np.empty(p, dtype=np.int64)
    sweeps = 0
    while sweeps < max_sweeps:
        change = _sweep_sparse(indptr, indices, vals, diag, beta, resid, thresh, full, p)
        sweeps += 1
        if change < tol:
            return sweeps, True
        n_act = 0
        for j in range(p):
            if beta[j] != 0.0:
                active[n_act] = j
                n_act += 1
        while sweeps < max_sweeps:
            change = _sweep_sparse(indptr, indices, vals, diag, beta, resid, thresh, active, n_act)
            sweeps += 1
            if change < tol:
                break
    return sweeps, False
