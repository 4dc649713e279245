"""Dense interior-point solution of the C-SVC dual, independent of the SMO code."""

import numpy as np
from cvxopt import matrix, solvers


def dual_optimum(K, y, c):
    """Maximum of sum(a) - 1/2 (a*y)' K (a*y) s.t. 0 <= a <= c, y'a = 0."""
    n = len(y)
    y = np.asarray(y, dtype=float)
    Q = np.outer(y, y) * K + 1e-12 * np.eye(n)
    G = np.vstack([-np.eye(n), np.eye(n)])
    h = np.concatenate([np.zeros(n), np.full(n, c)])
    opts = {"show_progress": False, "abstol": 1e-14, "reltol": 1e-14, "feastol": 1e-12,
            "maxiters": 200}
    sol = solvers.qp(matrix(Q), matrix(-np.ones(n)), matrix(G), matrix(h),
                     matrix(y[None, :]), matrix(0.0), options=opts)
    a = np.clip(np.array(sol["x"]).ravel(), 0, c)
    ay = a * y
    return float(a.sum() - 0.5 * ay @ K @ ay), a
