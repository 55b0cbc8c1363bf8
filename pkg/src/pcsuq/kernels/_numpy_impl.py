"""Pure-numpy kernel implementations (fallback path).

Split costs are computed from stable-sorted prefix sums with the same
expression structure as the numba loops, so both paths pick identical splits
(including ties, which resolve to the lowest feature index then the lowest
threshold).
"""

import numpy as np


def best_split_mse(X, y, feat_idx, min_leaf):
    """Exhaustive MSE split search over the given feature columns.

    Returns (found, feature, threshold, cost) where cost is the summed SSE of
    the two children; found is 0 when no valid split exists.
    """
    n = X.shape[0]
    best_cost = np.inf
    best_feat = -1
    best_thr = 0.0
    found = 0
    if n < 2 * min_leaf:
        return found, best_feat, best_thr, best_cost
    sizes = np.arange(min_leaf, n - min_leaf + 1, dtype=np.int64)
    for f in feat_idx:
        xcol = X[:, f]
        order = np.argsort(xcol, kind="stable")
        xs = xcol[order]
        ys = y[order]
        cs = np.cumsum(ys)
        css = np.cumsum(ys * ys)
        valid = xs[sizes] != xs[sizes - 1]
        if not valid.any():
            continue
        sl = cs[sizes - 1]
        sl2 = css[sizes - 1]
        sr = cs[n - 1] - sl
        sr2 = css[n - 1] - sl2
        cost = (sl2 - sl * sl / sizes) + (sr2 - sr * sr / (n - sizes))
        cost[~valid] = np.inf
        j = int(np.argmin(cost))
        if cost[j] < best_cost:
            i = int(sizes[j])
            thr = 0.5 * (xs[i - 1] + xs[i])
            if thr >= xs[i]:
                thr = xs[i - 1]
            best_cost = float(cost[j])
            best_feat = int(f)
            best_thr = float(thr)
            found = 1
    return found, best_feat, best_thr, best_cost


def best_split_gini(X, ycodes, n_classes, feat_idx, min_leaf):
    """Exhaustive Gini split search; cost is n_l*gini_l + n_r*gini_r."""
    n = X.shape[0]
    best_cost = np.inf
    best_feat = -1
    best_thr = 0.0
    found = 0
    if n < 2 * min_leaf:
        return found, best_feat, best_thr, best_cost
    sizes = np.arange(min_leaf, n - min_leaf + 1, dtype=np.int64)
    classes = np.arange(n_classes, dtype=np.int64)
    for f in feat_idx:
        xcol = X[:, f]
        order = np.argsort(xcol, kind="stable")
        xs = xcol[order]
        ys = ycodes[order]
        onehot = (ys[:, None] == classes[None, :]).astype(np.int64)
        ccum = np.cumsum(onehot, axis=0)
        valid = xs[sizes] != xs[sizes - 1]
        if not valid.any():
            continue
        left = ccum[sizes - 1]
        right = ccum[n - 1][None, :] - left
        sl2 = np.sum(left * left, axis=1)
        sr2 = np.sum(right * right, axis=1)
        cost = (sizes - sl2 / sizes) + ((n - sizes) - sr2 / (n - sizes))
        cost[~valid] = np.inf
        j = int(np.argmin(cost))
        if cost[j] < best_cost:
            i = int(sizes[j])
            thr = 0.5 * (xs[i - 1] + xs[i])
            if thr >= xs[i]:
                thr = xs[i - 1]
            best_cost = float(cost[j])
            best_feat = int(f)
            best_thr = float(thr)
            found = 1
    return found, best_feat, best_thr, best_cost


def lasso_cd(X, y, lam, max_iter, tol):
    """Cyclic coordinate descent for (1/2n)||y - Xb||^2 + lam*||b||_1."""
    n, d = X.shape
    beta = np.zeros(d)
    r = y.copy()
    z = np.einsum("ij,ij->j", X, X) / n
    for _ in range(max_iter):
        delta_max = 0.0
        for j in range(d):
            if z[j] <= 0.0:
                continue
            bj = beta[j]
            rho = X[:, j] @ r / n + z[j] * bj
            if rho > lam:
                bnew = (rho - lam) / z[j]
            elif rho < -lam:
                bnew = (rho + lam) / z[j]
            else:
                bnew = 0.0
            if bnew != bj:
                r -= X[:, j] * (bnew - bj)
                beta[j] = bnew
                step = abs(bnew - bj)
                if step > delta_max:
                    delta_max = step
        if delta_max <= tol:
            break
    return beta
