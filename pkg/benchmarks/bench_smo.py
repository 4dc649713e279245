"""Compare the compiled and pure-Python SMO cores on LOOCV-sized problems.

    python3 benchmarks/bench_smo.py [--n 52] [--repeat 3]

Each core runs a single dual solve and a full leave-one-out pass over an RBF
Gram matrix of a synthetic cohort; decisions are checked to be identical.
"""

import argparse
import time

import numpy as np

from penrt.dataset import IndicatorVector, apply_scaler, fit_scaler, select_features
from penrt.svm import KernelSpec, _smo_py, gram
from penrt.synth import reference_spec, sample_cohort

try:
    from penrt.svm import _smo_ext
except ImportError:
    _smo_ext = None


def problem(n: int, seed: int):
    spec = reference_spec(seed)
    scale = n / spec.n_samples
    counts = {k: max(1, round(v * scale)) for k, v in spec.counts.items()}
    ds = sample_cohort(spec.with_counts(counts))
    sub = select_features(ds, IndicatorVector.from_tasks([2, 4, 7]))
    X = apply_scaler(sub, fit_scaler(sub)).features
    y = np.array([1.0 if lab == "ES-AD" else -1.0 for lab in sub.labels])
    return np.ascontiguousarray(gram(KernelSpec.rbf(2.0), X)), y


def best_of(fn, repeat: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeat):
        start = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - start)
    return best, out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=52, help="approximate cohort size")
    ap.add_argument("--c", type=float, default=10.0)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    K, y = problem(args.n, args.seed)
    n = len(y)
    train = np.arange(n, dtype=np.intp)
    folds = np.arange(n, dtype=np.intp)
    cores = [_smo_py] + ([_smo_ext] if _smo_ext is not None else [])
    rows, decisions = [], {}
    for core in cores:
        t_solve, _ = best_of(lambda: core.solve(K, y, train, args.c, 1e-3, 10**7), args.repeat)
        t_cv, out = best_of(
            lambda: core.cv_decisions(K, y, folds, n, args.c, 1e-3, 10**7), args.repeat
        )
        decisions[core.NAME] = np.asarray(out[0])
        rows.append((core.NAME, t_solve, t_cv))

    print(f"n={n}, C={args.c:g}, gamma=2, best of {args.repeat}")
    print(f"{'core':<8} {'solve (ms)':>12} {'LOOCV (ms)':>12}")
    for name, t_solve, t_cv in rows:
        print(f"{name:<8} {t_solve * 1e3:12.3f} {t_cv * 1e3:12.3f}")
    if len(rows) == 2:
        print(f"speed-up: solve x{rows[0][1] / rows[1][1]:.1f}, LOOCV x{rows[0][2] / rows[1][2]:.1f}")
        same = np.array_equal(decisions["python"], decisions["cython"])
        print(f"identical LOOCV decisions: {same}")
    else:
        print("compiled core not built; only the pure-Python core was timed")


if __name__ == "__main__":
    main()
