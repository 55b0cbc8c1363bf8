"""Numba-compiled kernel implementations (hot path).

Loops mirror the vectorized fallback exactly: stable sort, prefix sums, and
first-minimum selection, so trees built through either path are identical.
"""

import numpy as np
from numba import njit


@njit(cache=True)
def best_split_mse(X, y, feat_idx, min_leaf):
    n = X.shape[0]
    best_cost = np.inf
    best_feat = -1
    best_thr = 0.0
    found = 0
    if n < 2 * min_leaf:
        return found, best_feat, best_thr, best_cost
    for fi in range(feat_idx.shape[0]):
        f = feat_idx[fi]
        xcol = np.ascontiguousarray(X[:, f])
        order = np.argsort(xcol, kind="mergesort")
        xs = xcol[order]
        ys = y[order]
        cs = np.cumsum(ys)
        css = np.cumsum(ys * ys)
        total = cs[n - 1]
        total2 = css[n - 1]
        for i in range(min_leaf, n - min_leaf + 1):
            if xs[i] == xs[i - 1]:
                continue
            sl = cs[i - 1]
            sl2 = css[i - 1]
            sr = total - sl
            sr2 = total2 - sl2
            cost = (sl2 - sl * sl / i) + (sr2 - sr * sr / (n - i))
            if cost < best_cost:
                thr = 0.5 * (xs[i - 1] + xs[i])
                if thr >= xs[i]:
                    thr = xs[i - 1]
                best_cost = cost
                best_feat = f
                best_thr = thr
                found = 1
    return found, best_feat, best_thr, best_cost


@njit(cache=True)
def best_split_gini(X, ycodes, n_classes, feat_idx, min_leaf):
    n = X.shape[0]
    best_cost = np.inf
    best_feat = -1
    best_thr = 0.0
    found = 0
    if n < 2 * min_leaf:
        return found, best_feat, best_thr, best_cost
    total = np.zeros(n_classes, dtype=np.int64)
    for i in range(n):
        total[ycodes[i]] += 1
    tot2 = 0
    for c in range(n_classes):
        tot2 += total[c] * total[c]
    left = np.zeros(n_classes, dtype=np.int64)
    for fi in range(feat_idx.shape[0]):
        f = feat_idx[fi]
        xcol = np.ascontiguousarray(X[:, f])
        order = np.argsort(xcol, kind="mergesort")
        xs = xcol[order]
        for c in range(n_classes):
            left[c] = 0
        sl2 = 0
        sr2 = tot2
        for i in range(1, n - min_leaf + 1):
            c = ycodes[order[i - 1]]
            sl2 += 2 * left[c] + 1
            sr2 += 1 - 2 * (total[c] - left[c])
            left[c] += 1
            if i < min_leaf:
                continue
            if xs[i] == xs[i - 1]:
                continue
            cost = (i - sl2 / i) + ((n - i) - sr2 / (n - i))
            if cost < best_cost:
                thr = 0.5 * (xs[i - 1] + xs[i])
                if thr >= xs[i]:
                    thr = xs[i - 1]
                best_cost = cost
                best_feat = f
                best_thr = thr
                found = 1
    return found, best_feat, best_thr, best_cost


@njit(cache=True)
def lasso_cd(X, y, lam, max_iter, tol):
    n, d = X.shape
    beta = np.zeros(d)
    r = y.copy()
    z = np.zeros(d)
    for j in range(d):
        s = 0.0
        for i in range(n):
            s += X[i, j] * X[i, j]
        z[j] = s / n
    for _ in range(max_iter):
        delta_max = 0.0
        for j in range(d):
            if z[j] <= 0.0:
                continue
            bj = beta[j]
            s = 0.0
            for i in range(n):
                s += X[i, j] * r[i]
            rho = s / n + z[j] * bj
            if rho > lam:
                bnew = (rho - lam) / z[j]
            elif rho < -lam:
                bnew = (rho + lam) / z[j]
            else:
                bnew = 0.0
            if bnew != bj:
                diff = bnew - bj
                for i in range(n):
                    r[i] -= X[i, j] * diff
                beta[j] = bnew
                step = abs(diff)
                if step > delta_max:
                    delta_max = step
        if delta_max <= tol:
            break
    return beta
