"""Pure-Python SMO core, used when the compiled extension is unavailable.

Same entry points and the same arithmetic order as ``_smo_ext.pyx``; only
the working-set scan is vectorised with numpy.
"""

import numpy as np

NAME = "python"

TAU = 1e-12
OK, NONCONVERGED, SINGLE_CLASS = 0, 1, 2


def _smo(K, y, idx, C, tol, max_iter, alpha, G):
    ys = y[idx]
    if not (ys > 0).any() or not (ys < 0).any():
        return SINGLE_CLASS, 0.0, 0
    a = np.zeros(len(idx))
    g = np.full(len(idx), -1.0)
    Ksub = K[np.ix_(idx, idx)]
    pos = ys > 0
    it = 0
    status = OK
    while True:
        v = -ys * g
        up = (pos & (a < C)) | (~pos & (a > 0))
        low = (~pos & (a < C)) | (pos & (a > 0))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, v, -np.inf)))
        j = int(np.argmin(np.where(low, v, np.inf)))
        if v[i] - v[j] < tol:
            break
        if it >= max_iter:
            status = NONCONVERGED
            break
        it += 1

        yi, yj = ys[i], ys[j]
        old_ai, old_aj = a[i], a[j]
        quad = Ksub[i, i] + Ksub[j, j] - 2.0 * Ksub[i, j]
        if quad <= 0:
            quad = TAU
        ai, aj = a[i], a[j]
        if yi != yj:
            delta = (-g[i] - g[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
            elif ai < 0:
                ai, aj = 0.0, -diff
            if diff > 0:
                if ai > C:
                    ai, aj = C, C - diff
            elif aj > C:
                aj, ai = C, C + diff
        else:
            delta = (g[i] - g[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
            elif aj < 0:
                aj, ai = 0.0, total
            if total > C:
                if aj > C:
                    aj, ai = C, total - C
            elif ai < 0:
                ai, aj = 0.0, total
        a[i], a[j] = ai, aj
        dai = (ai - old_ai) * yi
        daj = (aj - old_aj) * yj
        g += ys * (Ksub[i] * dai + Ksub[j] * daj)

    ub, lb = np.inf, -np.inf
    nfree, sum_free = 0, 0.0
    for t in range(len(idx)):
        yg = ys[t] * g[t]
        if a[t] >= C:
            if ys[t] < 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        elif a[t] <= 0:
            if ys[t] > 0:
                ub = min(ub, yg)
            else:
                lb = max(lb, yg)
        else:
            nfree += 1
            sum_free += yg
    rho = sum_free / nfree if nfree else (ub + lb) / 2.0
    alpha[idx] = a
    G[idx] = g
    return status, rho, it


def solve(K, y, train, C, tol, max_iter):
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    train = np.asarray(train, dtype=np.intp)
    alpha = np.zeros(K.shape[0])
    G = np.zeros(K.shape[0])
    if len(train) == 0:
        return alpha, 0.0, 0, SINGLE_CLASS
    status, rho, it = _smo(K, y, train, C, tol, max_iter, alpha, G)
    return alpha, rho, it, status


def cv_decisions(K, y, fold_of, n_folds, C, tol, max_iter):
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    fold_of = np.asarray(fold_of, dtype=np.intp)
    n = K.shape[0]
    dec = np.full(n, np.nan)
    alpha = np.zeros(n)
    G = np.zeros(n)
    total_iter = 0
    for f in range(n_folds):
        idx = np.flatnonzero((fold_of >= 0) & (fold_of != f))
        status, rho, it = _smo(K, y, idx, C, tol, max_iter, alpha, G)
        total_iter += it
        if status != OK:
            return dec, total_iter, status
        for t in np.flatnonzero(fold_of == f):
            acc = 0.0
            for s in idx:
                if alpha[s] != 0.0:
                    acc += alpha[s] * y[s] * K[s, t]
            dec[t] = acc - rho
    return dec, total_iter, OK
