# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled SMO core.

Both entry points take a precomputed Gram matrix and release the GIL while
solving, so a thread pool gets real parallelism.  The pure-Python twin lives
in ``_smo_py.py`` and follows the same arithmetic step for step.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, NAN
from libc.stdlib cimport free, malloc

cnp.import_array()

NAME = "cython"

cdef double TAU = 1e-12

# status codes shared with the Python layer
cdef enum:
    OK = 0
    NONCONVERGED = 1
    SINGLE_CLASS = 2


cdef int _smo(const double[:, ::1] K, const double[::1] y, const Py_ssize_t* idx,
              Py_ssize_t m, double C, double tol, long long max_iter,
              double* alpha, double* G, double* rho, long long* n_iter) noexcept nogil:
    cdef Py_ssize_t a, b, t, i, j
    cdef double yt, v, gmax, gmin, yi, yj, kii, kjj, kij, quad, delta, diff, total
    cdef double old_ai, old_aj, dai, daj, ub, lb, sum_free, yg
    cdef long long it = 0
    cdef int npos = 0, nneg = 0, nfree = 0, status = OK

    for a in range(m):
        t = idx[a]
        alpha[t] = 0.0
        G[t] = -1.0
        if y[t] > 0:
            npos += 1
        else:
            nneg += 1
    if npos == 0 or nneg == 0:
        return SINGLE_CLASS

    while True:
        gmax = -INFINITY
        gmin = INFINITY
        i = -1
        j = -1
        for a in range(m):
            t = idx[a]
            yt = y[t]
            v = -yt * G[t]
            if (yt > 0 and alpha[t] < C) or (yt < 0 and alpha[t] > 0):
                if v > gmax:
                    gmax = v
                    i = t
            if (yt < 0 and alpha[t] < C) or (yt > 0 and alpha[t] > 0):
                if v < gmin:
                    gmin = v
                    j = t
        if i < 0 or j < 0 or gmax - gmin < tol:
            break
        if it >= max_iter:
            status = NONCONVERGED
            break
        it += 1

        yi = y[i]
        yj = y[j]
        kii = K[i, i]
        kjj = K[j, j]
        kij = K[i, j]
        old_ai = alpha[i]
        old_aj = alpha[j]
        if yi != yj:
            quad = kii + kjj - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = diff
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = kii + kjj - 2.0 * kij
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = total - C
            else:
                if alpha[j] < 0:
                    alpha[j] = 0.0
                    alpha[i] = total
            if total > C:
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = total - C
            else:
                if alpha[i] < 0:
                    alpha[i] = 0.0
                    alpha[j] = total

        dai = (alpha[i] - old_ai) * yi
        daj = (alpha[j] - old_aj) * yj
        for a in range(m):
            t = idx[a]
            G[t] += y[t] * (K[i, t] * dai + K[j, t] * daj)

    ub = INFINITY
    lb = -INFINITY
    sum_free = 0.0
    for a in range(m):
        t = idx[a]
        yg = y[t] * G[t]
        if alpha[t] >= C:
            if y[t] < 0:
                if yg < ub:
                    ub = yg
            elif yg > lb:
                lb = yg
        elif alpha[t] <= 0:
            if y[t] > 0:
                if yg < ub:
                    ub = yg
            elif yg > lb:
                lb = yg
        else:
            nfree += 1
            sum_free += yg
    if nfree > 0:
        rho[0] = sum_free / nfree
    else:
        rho[0] = (ub + lb) / 2.0
    n_iter[0] = it
    return status


def solve(const double[:, ::1] K, const double[::1] y, cnp.intp_t[::1] train,
          double C, double tol, long long max_iter):
    """Train on the rows ``train`` of the Gram matrix.

    Returns ``(alpha, rho, n_iter, status)``; ``alpha`` has one entry per row
    of ``K`` and is zero outside ``train``.
    """
    cdef Py_ssize_t n = K.shape[0]
    cdef Py_ssize_t m = train.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] alpha = np.zeros(n)
    cdef double[::1] G = np.zeros(n)
    cdef double rho = 0.0
    cdef long long n_iter = 0
    cdef int status
    cdef double* ap = <double*> cnp.PyArray_DATA(alpha)
    if m == 0:
        return alpha, rho, n_iter, SINGLE_CLASS
    with nogil:
        status = _smo(K, y, <Py_ssize_t*> &train[0], m, C, tol, max_iter,
                      ap, &G[0], &rho, &n_iter)
    return alpha, rho, n_iter, status


def cv_decisions(const double[:, ::1] K, const double[::1] y, const cnp.intp_t[::1] fold_of,
                 Py_ssize_t n_folds, double C, double tol, long long max_iter):
    """Held-out decision values for every fold of a cross-validation.

    ``fold_of[t]`` is the fold of sample ``t`` or -1 to leave it out of every
    training set.  For fold ``f`` the model is trained on all samples with
    ``fold_of >= 0`` and ``!= f`` (in index order) and evaluated on fold ``f``.
    Returns ``(decisions, total_iter, status)``; decisions are NaN for
    samples with ``fold_of == -1``.
    """
    cdef Py_ssize_t n = K.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] dec_arr = np.full(n, np.nan)
    cdef double[::1] dec = dec_arr
    cdef Py_ssize_t* idx = <Py_ssize_t*> malloc(n * sizeof(Py_ssize_t))
    cdef double* alpha = <double*> malloc(n * sizeof(double))
    cdef double* G = <double*> malloc(n * sizeof(double))
    cdef Py_ssize_t f, t, a, m, s
    cdef double rho, acc
    cdef long long n_iter, total_iter = 0
    cdef int status = OK, st
    if idx == NULL or alpha == NULL or G == NULL:
        free(idx); free(alpha); free(G)
        raise MemoryError()
    with nogil:
        for f in range(n_folds):
            m = 0
            for t in range(n):
                if fold_of[t] >= 0 and fold_of[t] != f:
                    idx[m] = t
                    m += 1
            st = _smo(K, y, idx, m, C, tol, max_iter, alpha, G, &rho, &n_iter)
            total_iter += n_iter
            if st != OK:
                status = st
                break
            for t in range(n):
                if fold_of[t] != f:
                    continue
                acc = 0.0
                for a in range(m):
                    s = idx[a]
                    if alpha[s] != 0.0:
                        acc += alpha[s] * y[s] * K[s, t]
                dec[t] = acc - rho
    free(idx)
    free(alpha)
    free(G)
    return dec_arr, total_iter, status
