"""Three-threshold rule on mode-4 durations (t4, t7, t2) and its exact training.

Prediction::

    t4 >= 15 and t7 >= 15:  HC iff t2 <= p2
    otherwise:              HC iff t4 >= p4 and t7 >= p7

The training error is piecewise constant in each threshold, with breaks at
the observed values, so an exhaustive search over one representative per
piece is exact.  The error also splits into a p2-only part (samples with
both timed tasks at 15) and a (p4, p7) part (everything else), so the two
searches run independently.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np

from .dataset import DurationDataset
from .errors import OutOfDomain
from .gaussian_regions import classes_of, triples
from .model_selection import ConfusionMatrix, CvOutcome

PRESCRIBED = 15.0
#: width used to place a point estimate inside the unbounded p2 interval
UNBOUNDED_STEP = 1.0
_FIXED_POINT_ROUNDS = 50


@dataclass(frozen=True)
class ThresholdParams:
    p4: float
    p7: float
    p2: float

    def __post_init__(self):
        for name in ("p4", "p7"):
            v = getattr(self, name)
            if not 0.0 <= v < PRESCRIBED:
                raise OutOfDomain(f"{name} must lie in [0, 15), got {v!r}")
        if not self.p2 > 0 or not math.isfinite(self.p2):
            raise OutOfDomain(f"p2 must be positive and finite, got {self.p2!r}")

    def to_dict(self) -> dict:
        return {"p4": self.p4, "p7": self.p7, "p2": self.p2}


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float  # may be inf
    lo_closed: bool
    hi_closed: bool

    def contains(self, v: float) -> bool:
        above = v >= self.lo if self.lo_closed else v > self.lo
        below = v <= self.hi if self.hi_closed else v < self.hi
        return above and below

    def midpoint(self) -> float:
        if math.isinf(self.hi):
            return self.lo + UNBOUNDED_STEP
        return (self.lo + self.hi) / 2.0

    def to_dict(self) -> dict:
        return {
            "lo": self.lo,
            "hi": None if math.isinf(self.hi) else self.hi,
            "lo_closed": self.lo_closed,
            "hi_closed": self.hi_closed,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Interval":
        hi = math.inf if d["hi"] is None else float(d["hi"])
        return cls(float(d["lo"]), hi, bool(d["lo_closed"]), bool(d["hi_closed"]))

    def __str__(self) -> str:
        left = "[" if self.lo_closed else "("
        right = "]" if self.hi_closed else ")"
        hi = "inf" if math.isinf(self.hi) else f"{self.hi:g}"
        return f"{left}{self.lo:g}, {hi}{right}"


@dataclass(frozen=True)
class AdhocFit:
    params: ThresholdParams
    errors: int
    intervals: dict  # name -> Interval
    n_samples: int
    classes: tuple[str, str] = ("HC", "ES-AD")

    def to_dict(self) -> dict:
        return {
            **self.params.to_dict(),
            "errors": self.errors,
            "n_samples": self.n_samples,
            "classes": list(self.classes),
            "intervals": {k: v.to_dict() for k, v in self.intervals.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "AdhocFit":
        return cls(
            params=ThresholdParams(float(d["p4"]), float(d["p7"]), float(d["p2"])),
            errors=int(d["errors"]),
            intervals={k: Interval.from_dict(v) for k, v in d["intervals"].items()},
            n_samples=int(d["n_samples"]),
            classes=tuple(d.get("classes", ("HC", "ES-AD"))),
        )

    @classmethod
    def from_json(cls, text: str) -> "AdhocFit":
        return cls.from_dict(json.loads(text))


def in_region2(t4, t7):
    return (np.asarray(t4) >= PRESCRIBED) & (np.asarray(t7) >= PRESCRIBED)


def predicts_negative(x: Sequence[float], p: ThresholdParams) -> bool:
    """True when the rule says HC (the pair's negative class)."""
    t4, t7, t2 = (float(v) for v in x)
    if t4 >= PRESCRIBED and t7 >= PRESCRIBED:
        return t2 <= p.p2
    return t4 >= p.p4 and t7 >= p.p7


def adhoc_predict(x: Sequence[float], p: ThresholdParams, classes=("HC", "ES-AD")) -> str:
    """Label of one (t4, t7, t2) point; t4 and t7 are expected clamped at 15."""
    if len(x) != 3:
        raise OutOfDomain(f"expected (t4, t7, t2), got {len(x)} values")
    return classes[0] if predicts_negative(x, p) else classes[1]


# -- pieces -------------------------------------------------------------------
# A "piece" is a maximal set of threshold values giving the same predictions on
# the training data.  Each piece is an Interval plus a representative value.


def _lower_pieces(values: np.ndarray) -> list[Interval]:
    """Pieces for a ``t >= p`` test with p in [0, 15)."""
    v = np.unique(values)
    if len(v) == 0:
        return [Interval(0.0, PRESCRIBED, True, False)]
    out = [Interval(0.0, float(v[0]), True, True)]
    for a, b in zip(v[:-1], v[1:]):
        out.append(Interval(float(a), float(b), False, True))
    if v[-1] < PRESCRIBED:
        out.append(Interval(float(v[-1]), PRESCRIBED, False, False))
    # thresholds stay below 15: drop pieces starting there, open those reaching it
    return [
        iv if iv.hi < PRESCRIBED else Interval(iv.lo, PRESCRIBED, iv.lo_closed, False)
        for iv in out
        if iv.lo < PRESCRIBED
    ]


def _upper_pieces(values: np.ndarray) -> list[Interval]:
    """Pieces for a ``t <= p`` test with p > 0."""
    w = np.unique(values)
    w = w[w > 0]
    if len(w) == 0:
        return [Interval(0.0, math.inf, False, False)]
    out = [Interval(0.0, float(w[0]), False, False)]
    for a, b in zip(w[:-1], w[1:]):
        out.append(Interval(float(a), float(b), True, False))
    out.append(Interval(float(w[-1]), math.inf, True, False))
    return out


def _reps(pieces: list[Interval]) -> np.ndarray:
    return np.array([iv.midpoint() for iv in pieces])


def _piece_of(pieces: list[Interval], v: float) -> int:
    for k, iv in enumerate(pieces):
        if iv.contains(v):
            return k
    raise ValueError(f"{v!r} outside every piece")


def _merge(pieces: list[Interval], a: int, b: int) -> Interval:
    return Interval(pieces[a].lo, pieces[b].hi, pieces[a].lo_closed, pieces[b].hi_closed)


def _run(optimal: np.ndarray, k: int) -> tuple[int, int]:
    """Maximal run of True entries of a 1-D mask containing index k."""
    a = k
    while a > 0 and optimal[a - 1]:
        a -= 1
    b = k
    while b + 1 < len(optimal) and optimal[b + 1]:
        b += 1
    return a, b


# -- training -----------------------------------------------------------------


def p2_errors(t2: np.ndarray, is_neg: np.ndarray, reps: np.ndarray) -> np.ndarray:
    """Region-2 error count for each p2 value in ``reps``."""
    says_neg = t2[None, :] <= reps[:, None]
    return np.sum(says_neg != is_neg[None, :], axis=1)


def p47_errors(t4, t7, is_neg, reps4, reps7) -> np.ndarray:
    """Error count outside region 2 for every (p4, p7) pair, as a matrix."""
    P4 = (t4[None, :] >= reps4[:, None]).astype(np.int64)
    P7 = (t7[None, :] >= reps7[:, None]).astype(np.int64)
    # a sample is called negative iff it passes both tests
    w = np.where(is_neg, -1, 1)
    return int(np.sum(is_neg)) + P4 @ (P7 * w).T


def _fit_arrays(X: np.ndarray, is_neg: np.ndarray) -> tuple[ThresholdParams, int, dict]:
    r2 = in_region2(X[:, 0], X[:, 1])

    # p2: region-2 samples only
    pieces2 = _upper_pieces(X[r2, 2])
    e2 = p2_errors(X[r2, 2], is_neg[r2], _reps(pieces2))
    best2 = int(e2.min())
    k2 = int(np.argmax(e2 == best2))
    a, b = _run(e2 == best2, k2)
    iv2 = _merge(pieces2, a, b)

    # (p4, p7): everything else
    rest = ~r2
    pieces4 = _lower_pieces(X[rest, 0])
    pieces7 = _lower_pieces(X[rest, 1])
    E = p47_errors(X[rest, 0], X[rest, 1], is_neg[rest], _reps(pieces4), _reps(pieces7))
    best47 = int(E.min())
    opt = E == best47
    k4, k7 = (int(v) for v in np.argwhere(opt)[0])
    converged = False
    for _ in range(_FIXED_POINT_ROUNDS):
        a4, b4 = _run(opt[:, k7], k4)
        n4 = _piece_of(pieces4, _merge(pieces4, a4, b4).midpoint())
        a7, b7 = _run(opt[n4, :], k7)
        n7 = _piece_of(pieces7, _merge(pieces7, a7, b7).midpoint())
        if (n4, n7) == (k4, k7):
            converged = True
            break
        k4, k7 = n4, n7
    a4, b4 = _run(opt[:, k7], k4)
    a7, b7 = _run(opt[k4, :], k7)
    iv4 = _merge(pieces4, a4, b4)
    iv7 = _merge(pieces7, a7, b7)
    if converged:
        p4, p7 = iv4.midpoint(), iv7.midpoint()
    else:
        # midpoints of the two intervals disagree; fall back to the optimal cell
        p4, p7 = pieces4[k4].midpoint(), pieces7[k7].midpoint()

    params = ThresholdParams(p4, p7, iv2.midpoint())
    return params, best2 + best47, {"p4": iv4, "p7": iv7, "p2": iv2}


def _binary_arrays(ds: DurationDataset):
    neg, _ = classes_of(ds)
    ids, labels, X = triples(ds)
    if len(ids) == 0:
        raise ValueError("no subject has tasks 4, 7 and 2")
    X = X.copy()
    X[:, :2] = np.minimum(X[:, :2], PRESCRIBED)
    is_neg = np.array([lab == neg for lab in labels])
    return ids, labels, X, is_neg


def adhoc_train(ds: DurationDataset) -> AdhocFit:
    """Minimise the training error count over all three thresholds.

    Each returned interval is the maximal set of values of that parameter
    which keeps the error minimal with the other two held at their returned
    values; the point estimate is the interval midpoint (``lo + 1`` for the
    unbounded p2 interval).
    """
    ids, _, X, is_neg = _binary_arrays(ds)
    params, errors, intervals = _fit_arrays(X, is_neg)
    return AdhocFit(params, errors, intervals, len(ids), classes_of(ds))


def adhoc_loocv(ds: DurationDataset) -> CvOutcome:
    """Leave-one-out: retrain thresholds without each sample, then predict it."""
    ids, _, X, is_neg = _binary_arrays(ds)
    n = len(ids)
    pred = np.empty(n, dtype=int)
    for k in range(n):
        keep = np.arange(n) != k
        params, _, _ = _fit_arrays(X[keep], is_neg[keep])
        pred[k] = -1 if predicts_negative(X[k], params) else 1
    truth = np.where(is_neg, -1, 1)
    cm = ConfusionMatrix.from_labels(truth, pred)
    return CvOutcome(
        best_config=None,
        error_rate=Fraction(cm.errors, n),
        confusion=cm,
        n_samples=n,
        subject_ids=tuple(ids),
        predictions=tuple(int(v) for v in pred),
    )


def training_errors(ds: DurationDataset, p: ThresholdParams) -> int:
    _, _, X, is_neg = _binary_arrays(ds)
    return sum(predicts_negative(x, p) != neg for x, neg in zip(X, is_neg))
