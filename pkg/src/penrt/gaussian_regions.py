"""Region-partitioned Gaussian mixtures over mode-4 durations (t4, t7, t2).

The 15 s prescribed time of tasks 4 and 7 splits the feature space into four
regions::

    region 1: t4 < 15, t7 < 15      (3 free coordinates)
    region 2: t4 = 15, t7 = 15      (t2 only)
    region 3: t4 = 15, t7 < 15      (t7, t2)
    region 4: t4 < 15, t7 = 15      (t4, t2)

Each (region, class) cell holds a weight, a mean vector and a vector of
standard deviations (diagonal covariance).  Coordinates pinned at 15 have
zero deviation and are left out of the density product.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

from .dataset import DurationDataset, IndicatorVector, select_features
from .errors import ClassAbsent, OutOfDomain, UnusableCell
from .model_selection import ConfusionMatrix, Evaluation

FEATURE_TASKS = (4, 7, 2)
PRESCRIBED = 15.0
EQ_TOL = 1e-9
REGIONS = (1, 2, 3, 4)
CLASSES = ("HC", "ES-AD")
ATYPICAL_SIGMAS = 4.0

#: coordinate indices (into (t4, t7, t2)) entering the density, per region
ACTIVE_DIMS = {1: (0, 1, 2), 2: (2,), 3: (1, 2), 4: (0, 2)}
#: same without t2 outside region 2
ACTIVE_DIMS_NO_T2 = {1: (0, 1), 2: (2,), 3: (1,), 4: (0,)}

_LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


def clamp_point(x: Sequence[float]) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (3,):
        raise OutOfDomain(f"expected (t4, t7, t2), got shape {x.shape}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise OutOfDomain(f"durations must be finite and non-negative, got {tuple(x)}")
    out = x.copy()
    out[:2] = np.minimum(out[:2], PRESCRIBED)
    return out


def assign_region(x: Sequence[float]) -> int:
    """Region of a (t4, t7, t2) point; t4/t7 above 15 are clamped first."""
    t4, t7, _ = clamp_point(x)
    at4 = abs(t4 - PRESCRIBED) <= EQ_TOL
    at7 = abs(t7 - PRESCRIBED) <= EQ_TOL
    if at4 and at7:
        return 2
    if at4:
        return 3
    if at7:
        return 4
    return 1


def _clamp_rows(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if np.any(X < 0) or not np.all(np.isfinite(X)):
        raise OutOfDomain("durations must be finite and non-negative")
    out = X.copy()
    out[:, :2] = np.minimum(out[:, :2], PRESCRIBED)
    return out


def _regions_of(X: np.ndarray) -> np.ndarray:
    """Vectorised :func:`assign_region` for already clamped rows."""
    at4 = np.abs(X[:, 0] - PRESCRIBED) <= EQ_TOL
    at7 = np.abs(X[:, 1] - PRESCRIBED) <= EQ_TOL
    return np.select([at4 & at7, at4, at7], [2, 3, 4], default=1)


def triples(ds: DurationDataset) -> tuple[tuple[str, ...], tuple[str, ...], np.ndarray]:
    """Subjects with tasks 4, 7 and 2, as (ids, labels, X) with X columns (t4, t7, t2)."""
    sel = select_features(ds, IndicatorVector.from_tasks(FEATURE_TASKS))
    order = [sel.tasks.index(t) for t in FEATURE_TASKS]
    return sel.subject_ids, sel.labels, np.array(sel.features[:, order])


def classes_of(ds: DurationDataset) -> tuple[str, str]:
    return ds.pair if ds.pair is not None else CLASSES


@dataclass(frozen=True)
class CellParams:
    """Parameters of one (region, class) cell.

    ``count`` and ``pi`` use every sample of the cell; ``mean``/``std`` use
    the ``n_used`` samples left after atypical-sample exclusion.
    """

    region: int
    label: str
    count: int
    pi: Fraction
    mean: tuple[float, ...] | None
    std: tuple[float, ...] | None
    usable: bool
    n_used: int = 0
    excluded: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "region": self.region,
            "label": self.label,
            "count": self.count,
            "pi": f"{self.pi.numerator}/{self.pi.denominator}",
            "mean": None if self.mean is None else list(self.mean),
            "std": None if self.std is None else list(self.std),
            "usable": self.usable,
            "n_used": self.n_used,
            "excluded": list(self.excluded),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CellParams":
        return cls(
            region=int(d["region"]),
            label=d["label"],
            count=int(d["count"]),
            pi=Fraction(d["pi"]),
            mean=None if d.get("mean") is None else tuple(float(v) for v in d["mean"]),
            std=None if d.get("std") is None else tuple(float(v) for v in d["std"]),
            usable=bool(d["usable"]),
            n_used=int(d.get("n_used", 0)),
            excluded=tuple(d.get("excluded", ())),
        )


@dataclass(frozen=True)
class RegionMixtureModel:
    cells: Mapping[tuple[int, str], CellParams]
    classes: tuple[str, str] = CLASSES
    active_dims: Mapping[int, tuple[int, ...]] = field(default_factory=lambda: dict(ACTIVE_DIMS))
    truncated: bool = False

    def cell(self, region: int, label: str) -> CellParams:
        return self.cells[(region, label)]

    def d(self, region: int) -> int:
        return len(self.active_dims[region])

    def to_dict(self) -> dict:
        return {
            "classes": list(self.classes),
            "truncated": self.truncated,
            "active_dims": {str(r): list(v) for r, v in self.active_dims.items()},
            "cells": [self.cells[(r, c)].to_dict() for r in REGIONS for c in self.classes],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "RegionMixtureModel":
        cells = {}
        for cd in d["cells"]:
            cp = CellParams.from_dict(cd)
            cells[(cp.region, cp.label)] = cp
        dims = d.get("active_dims")
        return cls(
            cells=cells,
            classes=tuple(d.get("classes", CLASSES)),
            active_dims={int(r): tuple(v) for r, v in dims.items()} if dims else dict(ACTIVE_DIMS),
            truncated=bool(d.get("truncated", False)),
        )

    @classmethod
    def from_json(cls, text: str) -> "RegionMixtureModel":
        return cls.from_dict(json.loads(text))


def _flag_atypical(X: np.ndarray, dims: tuple[int, ...], rule: str) -> np.ndarray:
    """Boolean mask of samples beyond ATYPICAL_SIGMAS deviations on an active dim."""
    n = len(X)
    flags = np.zeros(n, dtype=bool)
    if rule == "none":
        return flags
    if rule == "inclusive":
        if n < 2:
            return flags
        mu = X.mean(axis=0)
        sd = X.std(axis=0, ddof=1)
        for d in dims:
            if sd[d] > 0:
                flags |= np.abs(X[:, d] - mu[d]) > ATYPICAL_SIGMAS * sd[d]
        return flags
    if rule == "deleted":
        if n < 3:
            return flags
        for k in range(n):
            rest = np.delete(X, k, axis=0)
            mu = rest.mean(axis=0)
            sd = rest.std(axis=0, ddof=1)
            for d in dims:
                if sd[d] > 0 and abs(X[k, d] - mu[d]) > ATYPICAL_SIGMAS * sd[d]:
                    flags[k] = True
        return flags
    raise ValueError(f"unknown exclusion rule {rule!r}")


def fit_region_mixtures(
    ds: DurationDataset,
    *,
    exclusion: str = "inclusive",
    exclude: Sequence[str] = (),
    drop_t2_outside_region2: bool = False,
    truncated: bool = False,
) -> RegionMixtureModel:
    """Closed-form weights, means and (unbiased) deviations per cell.

    Atypical samples are found in a single pass and dropped before the final
    mean/deviation estimate; weights still count them.

    Args:
        exclusion: ``"inclusive"`` compares each sample with the statistics of
            its whole cell; ``"deleted"`` with those of the other samples of
            the cell; ``"none"`` disables the screen.
        exclude: subject ids removed from mean/deviation estimation by hand.
        drop_t2_outside_region2: leave t2 out of the density in regions 1, 3, 4.
        truncated: renormalise t4/t7 factors to [0, 15) at prediction time.
    """
    classes = classes_of(ds)
    ids, labels, X = triples(ds)
    if len(ids) == 0:
        raise ClassAbsent("no sample to fit")
    X = _clamp_rows(X)
    regions = _regions_of(X)
    dims = dict(ACTIVE_DIMS_NO_T2 if drop_t2_outside_region2 else ACTIVE_DIMS)
    manual = set(exclude)
    labels_arr = np.array(labels)
    cells = {}
    for r in REGIONS:
        n_r = int(np.sum(regions == r))
        for c in classes:
            members = np.flatnonzero((regions == r) & (labels_arr == c))
            count = len(members)
            pi = Fraction(count, n_r) if n_r else Fraction(0)
            kept = np.array([m for m in members if ids[m] not in manual], dtype=np.intp)
            flags = _flag_atypical(X[kept], dims[r], exclusion)
            used = kept[~flags]
            used_set = set(used.tolist())
            excluded = tuple(ids[m] for m in members if m not in used_set)
            mean = tuple(float(v) for v in X[used].mean(axis=0)) if len(used) else None
            std = None
            usable = False
            if len(used) >= 2:
                sd = X[used].std(axis=0, ddof=1)
                std = tuple(float(v) for v in sd)
                usable = all(sd[d] > 0 for d in dims[r])
            cells[(r, c)] = CellParams(r, c, count, pi, mean, std, usable, len(used), excluded)
    return RegionMixtureModel(cells, classes, dims, truncated)


def _log_density(model: RegionMixtureModel, cell: CellParams, x: np.ndarray) -> float:
    logp = 0.0
    for d in model.active_dims[cell.region]:
        mu, sd = cell.mean[d], cell.std[d]
        z = (x[d] - mu) / sd
        logp += -0.5 * z * z - _LOG_SQRT_2PI - math.log(sd)
        if model.truncated and d < 2:
            mass = stats.norm.cdf((PRESCRIBED - mu) / sd) - stats.norm.cdf(-mu / sd)
            logp -= math.log(mass)
    return logp


def gm_density(model: RegionMixtureModel, region: int, label: str, x: Sequence[float]) -> float:
    """Product of univariate normal densities over the region's active coordinates."""
    cell = model.cell(region, label)
    if not cell.usable:
        raise UnusableCell(f"region {region} {label}: deviation not estimable")
    return math.exp(_log_density(model, cell, clamp_point(x)))


def gm_score(model: RegionMixtureModel, region: int, label: str, x: Sequence[float]) -> float:
    """Weighted component ``pi * N(x)``."""
    return float(model.cell(region, label).pi) * gm_density(model, region, label, x)


def gm_predict(model: RegionMixtureModel, x: Sequence[float]) -> str:
    """Class with the largest weighted density in the point's region.

    An unusable cell scores zero, so a lone usable class wins; with neither
    usable the larger weight wins.  Exact ties go to the positive class.
    """
    x = clamp_point(x)
    r = assign_region(x)
    neg, pos = model.classes
    cn, cp = model.cell(r, neg), model.cell(r, pos)
    if not cn.usable and not cp.usable:
        return neg if cn.pi > cp.pi else pos
    if not cn.usable:
        return pos
    if not cp.usable:
        return neg
    # log space keeps far-tail comparisons meaningful
    sn = math.log(cn.pi) + _log_density(model, cn, x)
    sp = math.log(cp.pi) + _log_density(model, cp, x)
    return neg if sn > sp else pos


def _evaluation(ids, labels, X, preds, classes) -> Evaluation:
    pos = classes[1]
    truth = [1 if lab == pos else -1 for lab in labels]
    guess = [1 if p == pos else -1 for p in preds]
    return Evaluation(
        tuple(ids),
        tuple(labels),
        tuple(assign_region(x) for x in X),
        tuple(preds),
        ConfusionMatrix.from_labels(truth, guess),
    )


def gm_train_as_test(ds: DurationDataset, **fit_kw) -> Evaluation:
    model = fit_region_mixtures(ds, **fit_kw)
    ids, labels, X = triples(ds)
    return _evaluation(ids, labels, X, [gm_predict(model, x) for x in X], model.classes)


def gm_loocv(ds: DurationDataset, **fit_kw) -> Evaluation:
    ids, labels, X = triples(ds)
    rows = np.arange(len(ids))
    sel = select_features(ds, IndicatorVector.from_tasks(FEATURE_TASKS))
    preds = []
    for k in rows:
        model = fit_region_mixtures(sel.subset(np.delete(rows, k)), **fit_kw)
        preds.append(gm_predict(model, X[k]))
    return _evaluation(ids, labels, X, preds, classes_of(ds))


def mean_confidence_intervals(cell: CellParams, level: float = 0.99) -> dict:
    """Two-sided intervals for each coordinate mean, normal and Student-t."""
    if not cell.usable or cell.n_used < 2:
        return {}
    n = cell.n_used
    z = stats.norm.ppf(0.5 + level / 2)
    t = stats.t.ppf(0.5 + level / 2, df=n - 1)
    out = {}
    for d, task in enumerate(FEATURE_TASKS):
        if cell.std[d] == 0:
            continue
        se = cell.std[d] / math.sqrt(n)
        out[f"t{task}"] = {
            "normal": (cell.mean[d] - z * se, cell.mean[d] + z * se),
            "t": (cell.mean[d] - t * se, cell.mean[d] + t * se),
        }
    return out


def with_truncation(model: RegionMixtureModel, truncated: bool = True) -> RegionMixtureModel:
    return replace(model, truncated=truncated)
