"""Grid search with leave-one-out CV, nested CV, repeated k-fold, metrics.

Configurations are ``(indicator, c, gamma)`` triples enumerated indicator
first (ascending integer code), then ``c`` ascending, then ``gamma``
ascending.  The best configuration is the first one reaching the minimal
error, so ties always resolve toward the start of the grid.

Work is split into ``(indicator, gamma)`` units: one Gram matrix serves every
``c`` and every fold of the unit.  Units run on a thread pool (the compiled
core releases the GIL) and are merged in grid order, so results do not
depend on the thread count.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .dataset import (
    DurationDataset,
    IndicatorVector,
    fit_scaler_array,
    select_features,
)
from .errors import (
    BadFoldCount,
    ClassAbsent,
    DegenerateFeature,
    EmptyGrid,
    EmptyResult,
    UndefinedMetric,
)
from .svm import DEFAULT_MAX_ITER, DEFAULT_TOL, KernelSpec, gram
from .svm._backend import core
from .svm.model import _check_status, solve_dual

DEFAULT_C = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)
DEFAULT_GAMMA = (0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0)


@dataclass(frozen=True)
class Config:
    indicator: IndicatorVector
    c: float
    gamma: float

    def to_dict(self) -> dict:
        return {"tasks": list(self.indicator.tasks), "c": self.c, "gamma": self.gamma}

    def __str__(self) -> str:
        return f"tasks={{{self.indicator}}} c={self.c:g} gamma={self.gamma:g}"


@dataclass(frozen=True)
class GridSpec:
    indicators: tuple[IndicatorVector, ...]
    cs: tuple[float, ...]
    gammas: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "indicators", tuple(self.indicators))
        object.__setattr__(self, "cs", tuple(float(c) for c in self.cs))
        object.__setattr__(self, "gammas", tuple(float(g) for g in self.gammas))
        if not (self.indicators and self.cs and self.gammas):
            raise EmptyGrid("grid needs at least one indicator, one c and one gamma")
        if any(not c > 0 for c in self.cs) or any(not g > 0 for g in self.gammas):
            raise ValueError("c and gamma values must be positive")

    @classmethod
    def default(cls) -> "GridSpec":
        return cls(tuple(IndicatorVector.all_vectors()), DEFAULT_C, DEFAULT_GAMMA)

    @classmethod
    def single(cls, tasks: Iterable[int], c: float, gamma: float) -> "GridSpec":
        return cls((IndicatorVector.from_tasks(tasks),), (c,), (gamma,))

    def __len__(self) -> int:
        return len(self.indicators) * len(self.cs) * len(self.gammas)

    def configs(self) -> list[Config]:
        return [
            Config(ind, c, g) for ind in self.indicators for c in self.cs for g in self.gammas
        ]

    def to_dict(self) -> dict:
        return {
            "indicators": [list(i.tasks) for i in self.indicators],
            "c": list(self.cs),
            "gamma": list(self.gammas),
        }


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with the pair's positive class as "positive"."""

    tp: int
    fp: int
    fn: int
    tn: int

    @classmethod
    def from_labels(cls, truth: Sequence[int], pred: Sequence[int]) -> "ConfusionMatrix":
        t = np.asarray(truth) > 0
        p = np.asarray(pred) > 0
        return cls(
            tp=int(np.sum(t & p)),
            fp=int(np.sum(~t & p)),
            fn=int(np.sum(t & ~p)),
            tn=int(np.sum(~t & ~p)),
        )

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    @property
    def errors(self) -> int:
        return self.fp + self.fn

    @property
    def error_rate(self) -> Fraction:
        return Fraction(self.errors, self.total)

    def to_dict(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


@dataclass(frozen=True)
class Metrics:
    accuracy: Fraction
    sensitivity: Fraction
    specificity: Fraction

    def to_dict(self) -> dict:
        return {k: float(getattr(self, k)) for k in ("accuracy", "sensitivity", "specificity")}


def _ratio(num: int, den: int, name: str) -> Fraction:
    if den == 0:
        raise UndefinedMetric(f"{name} undefined: zero denominator")
    return Fraction(num, den)


def metrics(cm: ConfusionMatrix) -> Metrics:
    """Accuracy, sensitivity (TP rate) and specificity (TN rate), exact."""
    return Metrics(
        accuracy=_ratio(cm.tp + cm.tn, cm.total, "accuracy"),
        sensitivity=_ratio(cm.tp, cm.tp + cm.fn, "sensitivity"),
        specificity=_ratio(cm.tn, cm.tn + cm.fp, "specificity"),
    )


def metrics_dict(cm: ConfusionMatrix) -> dict:
    """Like :func:`metrics` but tolerant: undefined entries become ``None``."""
    out = {}
    for name, num, den in (
        ("accuracy", cm.tp + cm.tn, cm.total),
        ("sensitivity", cm.tp, cm.tp + cm.fn),
        ("specificity", cm.tn, cm.tn + cm.fp),
    ):
        out[name] = num / den if den else None
    return out


@dataclass(frozen=True)
class Evaluation:
    """Per-sample predictions of a label-valued classifier (GM or threshold rule)."""

    subject_ids: tuple[str, ...]
    labels: tuple[str, ...]
    regions: tuple[int, ...]
    predictions: tuple[str, ...]
    confusion: ConfusionMatrix

    @property
    def errors(self) -> int:
        return self.confusion.errors

    def error_regions(self) -> list[int]:
        return [r for r, l, p in zip(self.regions, self.labels, self.predictions) if l != p]

    def error_ids(self) -> list[str]:
        return [s for s, l, p in zip(self.subject_ids, self.labels, self.predictions) if l != p]


@dataclass(frozen=True)
class FoldChoice:
    """Configuration picked by one outer fold of the nested CV."""

    subject_id: str
    config: Config
    inner_errors: int
    inner_n: int
    correct: bool


@dataclass(frozen=True)
class CvOutcome:
    best_config: Config | None
    error_rate: Fraction
    confusion: ConfusionMatrix
    n_samples: int
    subject_ids: tuple[str, ...] = ()
    predictions: tuple[int, ...] = ()
    per_fold_configs: tuple[FoldChoice, ...] = ()
    config_errors: np.ndarray | None = field(default=None, repr=False)
    config_n: np.ndarray | None = field(default=None, repr=False)
    skipped: tuple[tuple[str, str], ...] = ()

    @property
    def accuracy(self) -> Fraction:
        return 1 - self.error_rate

    def stability(self) -> list[tuple[Config, int]]:
        """How many outer folds picked each configuration (nested CV only)."""
        counts: dict[Config, int] = {}
        for fc in self.per_fold_configs:
            counts[fc.config] = counts.get(fc.config, 0) + 1
        return sorted(counts.items(), key=lambda kv: -kv[1])


# -- preparation ------------------------------------------------------------


@dataclass(frozen=True)
class _Prepared:
    """One indicator's view of the dataset: kept rows, features, targets."""

    indicator: IndicatorVector
    rows: np.ndarray  # positions in the source dataset
    X: np.ndarray  # scaled once when scaling is global, raw otherwise
    y: np.ndarray
    tasks: tuple[int, ...]


def _prepare(
    ds: DurationDataset, indicator: IndicatorVector, scale_per_fold: bool, min_per_class: int
) -> _Prepared | str:
    """Select and (globally) scale; a string return explains why it is unusable."""
    try:
        sel = select_features(ds, indicator)
    except EmptyResult as exc:
        return str(exc)
    y = sel.binary_targets()
    if min(np.sum(y > 0), np.sum(y < 0)) < min_per_class:
        return f"fewer than {min_per_class} samples of a class with every task of {{{indicator}}}"
    pos = {sid: i for i, sid in enumerate(ds.subject_ids)}
    rows = np.array([pos[s] for s in sel.subject_ids], dtype=np.intp)
    X = np.array(sel.features)
    if not scale_per_fold:
        try:
            X = fit_scaler_array(X, sel.tasks).transform(X)
        except DegenerateFeature as exc:
            return str(exc)
    return _Prepared(indicator, rows, np.ascontiguousarray(X), y, sel.tasks)


def _check_binary(ds: DurationDataset, min_per_class: int) -> None:
    if ds.pair is None:
        raise ClassAbsent("dataset has no class pair; call pair_subset first")
    counts = ds.counts()
    for lab in ds.pair:
        if counts.get(lab, 0) < min_per_class:
            raise ClassAbsent(f"need at least {min_per_class} {lab} samples, got {counts.get(lab, 0)}")


def _fold_decisions(
    prep: _Prepared,
    fold_of: np.ndarray,
    n_folds: int,
    c_values: Sequence[float],
    gamma: float,
    scale_per_fold: bool,
    tol: float,
    max_iter: int,
    K: np.ndarray | None = None,
) -> list[np.ndarray]:
    """Held-out decision values for each ``c`` (NaN where ``fold_of < 0``)."""
    kernel = KernelSpec.rbf(gamma)
    fold_of = np.ascontiguousarray(fold_of, dtype=np.intp)
    out = []
    if not scale_per_fold:
        if K is None:
            K = gram(kernel, prep.X)
        for c in c_values:
            dec, _, status = core.cv_decisions(K, prep.y, fold_of, n_folds, c, tol, max_iter)
            _check_status(status, max_iter, tol)
            out.append(np.asarray(dec))
        return out
    decs = [np.full(len(prep.y), np.nan) for _ in c_values]
    for f in range(n_folds):
        train = np.flatnonzero((fold_of >= 0) & (fold_of != f))
        test = np.flatnonzero(fold_of == f)
        Xs = fit_scaler_array(prep.X[train], prep.tasks).transform(prep.X)
        Kf = gram(kernel, Xs)
        for dec, c in zip(decs, c_values):
            sol = solve_dual(Kf, prep.y, c, tol, max_iter, train=train)
            ay = sol.alpha[train] * prep.y[train]
            dec[test] = Kf[np.ix_(test, train)] @ ay - sol.rho
    return decs


def _labels(dec: np.ndarray) -> np.ndarray:
    return np.where(dec >= 0, 1, -1)


def _map(fn, items, threads: int | None):
    threads = threads or os.cpu_count() or 1
    if threads == 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


# -- LOOCV grid search --------------------------------------------------------


def _loo_fold(n: int) -> np.ndarray:
    return np.arange(n, dtype=np.intp)


def loocv_grid_search(
    ds: DurationDataset,
    grid: GridSpec,
    *,
    scale_per_fold: bool = False,
    threads: int | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CvOutcome:
    """LOOCV error of every configuration; keep the first minimal one."""
    _check_binary(ds, 2)
    preps = {}
    skipped = []
    for ind in grid.indicators:
        p = _prepare(ds, ind, scale_per_fold, 2)
        if isinstance(p, str):
            skipped.append((str(ind), p))
        preps[ind] = p

    units = [(ind, g) for ind in grid.indicators for g in grid.gammas]

    def run(unit):
        ind, g = unit
        prep = preps[ind]
        if isinstance(prep, str):
            return None
        n = len(prep.y)
        decs = _fold_decisions(prep, _loo_fold(n), n, grid.cs, g, scale_per_fold, tol, max_iter)
        return [_labels(d) for d in decs]

    results = dict(zip(units, _map(run, units, threads)))

    nc, ng = len(grid.cs), len(grid.gammas)
    errors = np.full(len(grid), -1, dtype=np.int64)
    sizes = np.zeros(len(grid), dtype=np.int64)
    best = None
    for a, ind in enumerate(grid.indicators):
        prep = preps[ind]
        for gi, g in enumerate(grid.gammas):
            labels = results[(ind, g)]
            if labels is None:
                continue
            for ci in range(nc):
                k = (a * nc + ci) * ng + gi
                e = int(np.sum(labels[ci] != prep.y))
                errors[k], sizes[k] = e, len(prep.y)
    for k in range(len(grid)):
        if errors[k] < 0:
            continue
        # strict improvement on the error rate keeps the earliest configuration
        if best is None or Fraction(int(errors[k]), int(sizes[k])) < Fraction(
            int(errors[best]), int(sizes[best])
        ):
            best = k
    if best is None:
        raise EmptyResult("no configuration of the grid could be evaluated")
    a, rest = divmod(best, nc * ng)
    ci, gi = divmod(rest, ng)
    ind = grid.indicators[a]
    prep = preps[ind]
    pred = results[(ind, grid.gammas[gi])][ci]
    cm = ConfusionMatrix.from_labels(prep.y, pred)
    return CvOutcome(
        best_config=Config(ind, grid.cs[ci], grid.gammas[gi]),
        error_rate=cm.error_rate,
        confusion=cm,
        n_samples=len(prep.y),
        subject_ids=tuple(ds.subject_ids[r] for r in prep.rows),
        predictions=tuple(int(v) for v in pred),
        config_errors=errors,
        config_n=sizes,
        skipped=tuple(skipped),
    )


def loocv(
    ds: DurationDataset,
    config: Config,
    *,
    scale_per_fold: bool = False,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CvOutcome:
    """Plain LOOCV of one configuration."""
    grid = GridSpec((config.indicator,), (config.c,), (config.gamma,))
    return loocv_grid_search(
        ds, grid, scale_per_fold=scale_per_fold, threads=1, tol=tol, max_iter=max_iter
    )


# -- nested CV ------------------------------------------------------------------


def nested_cv(
    ds: DurationDataset,
    grid: GridSpec,
    *,
    scale_per_fold: bool = False,
    threads: int | None = None,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> CvOutcome:
    """Leave-one-out nested CV.

    Each outer fold holds out one subject, runs the LOOCV grid search on the
    others (minimal inner error *count*, first wins), retrains on all the
    others with the chosen configuration and tests the held-out subject.
    An indicator is only eligible in an outer fold if the held-out subject
    has every selected task.
    """
    _check_binary(ds, 3)
    preps = {}
    skipped = []
    for ind in grid.indicators:
        p = _prepare(ds, ind, scale_per_fold, 3)
        if isinstance(p, str):
            skipped.append((str(ind), p))
        preps[ind] = p

    units = [(ind, g) for ind in grid.indicators for g in grid.gammas]
    nc, ng = len(grid.cs), len(grid.gammas)
    n = len(ds)

    def run(unit):
        ind, g = unit
        prep = preps[ind]
        if isinstance(prep, str):
            return None
        m = len(prep.y)
        K = None if scale_per_fold else gram(KernelSpec.rbf(g), prep.X)
        # inner[p][ci]: inner LOOCV error count with row p held out
        inner = np.zeros((m, nc), dtype=np.int64)
        for p in range(m):
            fold_of = np.arange(m, dtype=np.intp)
            fold_of[p + 1 :] -= 1
            fold_of[p] = -1
            decs = _fold_decisions(prep, fold_of, m - 1, grid.cs, g, scale_per_fold, tol, max_iter, K)
            keep = fold_of >= 0
            for ci, d in enumerate(decs):
                inner[p, ci] = np.sum(_labels(d[keep]) != prep.y[keep])
        outer = _fold_decisions(prep, _loo_fold(m), m, grid.cs, g, scale_per_fold, tol, max_iter, K)
        return inner, [_labels(d) for d in outer]

    results = dict(zip(units, _map(run, units, threads)))

    choices = []
    preds = np.zeros(n, dtype=np.int64)
    truth = ds.binary_targets()
    eligible = np.zeros(n, dtype=bool)
    for i in range(n):
        best = None  # (errors, inner_n, config, prediction)
        for ind in grid.indicators:
            prep = preps[ind]
            if isinstance(prep, str):
                continue
            where = np.flatnonzero(prep.rows == i)
            if where.size == 0:
                continue
            p = int(where[0])
            for ci, c in enumerate(grid.cs):
                for g in grid.gammas:
                    inner, outer = results[(ind, g)]
                    e = int(inner[p, ci])
                    if best is None or e < best[0]:
                        best = (e, len(prep.y) - 1, Config(ind, c, g), int(outer[ci][p]))
        if best is None:
            continue
        eligible[i] = True
        preds[i] = best[3]
        choices.append(
            FoldChoice(ds.subject_ids[i], best[2], best[0], best[1], bool(best[3] == truth[i]))
        )
    if not eligible.any():
        raise EmptyResult("no outer fold had an eligible configuration")
    cm = ConfusionMatrix.from_labels(truth[eligible], preds[eligible])
    # the most frequent fold choice is reported as the overall configuration
    counts: dict[Config, int] = {}
    for fc in choices:
        counts[fc.config] = counts.get(fc.config, 0) + 1
    top = max(counts.items(), key=lambda kv: kv[1])[0]
    return CvOutcome(
        best_config=top,
        error_rate=cm.error_rate,
        confusion=cm,
        n_samples=int(eligible.sum()),
        subject_ids=tuple(ds.subject_ids[i] for i in np.flatnonzero(eligible)),
        predictions=tuple(int(v) for v in preds[eligible]),
        per_fold_configs=tuple(choices),
        skipped=tuple(skipped),
    )


# -- repeated k-fold --------------------------------------------------------------


@dataclass(frozen=True)
class KFoldResult:
    config: Config
    k: int
    repetitions: int
    seed: int
    n_samples: int
    fold_sizes: tuple[int, ...]
    error_counts: tuple[int, ...]

    def histogram(self) -> dict[int, int]:
        hist: dict[int, int] = {}
        for e in self.error_counts:
            hist[e] = hist.get(e, 0) + 1
        return dict(sorted(hist.items()))

    def mean_errors(self) -> float:
        return float(np.mean(self.error_counts))

    def to_csv(self) -> str:
        lines = ["error_count,frequency"]
        lines += [f"{e},{f}" for e, f in self.histogram().items()]
        return "\n".join(lines) + "\n"


def kfold_assignment(n: int, k: int, rng: np.random.Generator) -> np.ndarray:
    """Shuffle, then split into ``k`` folds whose sizes differ by at most one."""
    perm = rng.permutation(n)
    fold_of = np.empty(n, dtype=np.intp)
    for f, part in enumerate(np.array_split(perm, k)):
        fold_of[part] = f
    return fold_of


def repeated_kfold(
    ds: DurationDataset,
    k: int,
    config: Config,
    repetitions: int = 1000,
    seed: int = 0,
    *,
    scale_per_fold: bool = False,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> KFoldResult:
    """Misclassification counts of ``repetitions`` shuffled k-fold CVs.

    Training sets keep the dataset's row order; shuffling only decides fold
    membership, so ``k == n`` reproduces LOOCV exactly.
    """
    _check_binary(ds, 1)
    prep = _prepare(ds, config.indicator, scale_per_fold, 1)
    if isinstance(prep, str):
        raise EmptyResult(prep)
    n = len(prep.y)
    if not 2 <= k <= n:
        raise BadFoldCount(f"k must lie in [2, {n}], got {k}")
    if repetitions < 1:
        raise ValueError("repetitions must be at least 1")
    rng = np.random.default_rng(seed)
    K = None if scale_per_fold else gram(KernelSpec.rbf(config.gamma), prep.X)
    counts = []
    for _ in range(repetitions):
        fold_of = kfold_assignment(n, k, rng)
        (dec,) = _fold_decisions(
            prep, fold_of, k, (config.c,), config.gamma, scale_per_fold, tol, max_iter, K
        )
        counts.append(int(np.sum(_labels(dec) != prep.y)))
    sizes = tuple(len(part) for part in np.array_split(np.arange(n), k))
    return KFoldResult(config, k, repetitions, seed, n, sizes, tuple(counts))


# -- training set as test set ----------------------------------------------------


def train_as_test(
    ds: DurationDataset,
    config: Config,
    *,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
) -> tuple[ConfusionMatrix, int]:
    """Train on every sample and test on the same samples.

    Returns the confusion matrix and the number of support vectors.
    """
    _check_binary(ds, 1)
    prep = _prepare(ds, config.indicator, False, 1)
    if isinstance(prep, str):
        raise EmptyResult(prep)
    K = gram(KernelSpec.rbf(config.gamma), prep.X)
    sol = solve_dual(K, prep.y, config.c, tol, max_iter)
    dec = K @ (sol.alpha * prep.y) - sol.rho
    return ConfusionMatrix.from_labels(prep.y, _labels(dec)), int(np.sum(sol.alpha > 0))
