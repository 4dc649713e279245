"""Soft-margin kernel SVM (C-SVC): training, prediction, JSON round-trip."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..dataset import ScalerParams
from ..errors import DimensionMismatch, SingleClass, SolverNonConvergence
from ._backend import NONCONVERGED, SINGLE_CLASS, core
from .kernels import KernelSpec, gram

DEFAULT_TOL = 1e-3
DEFAULT_MAX_ITER = 10_000_000


@dataclass(frozen=True)
class DualSolution:
    alpha: np.ndarray
    rho: float
    n_iter: int


def _check_status(status: int, max_iter: int, tol: float) -> None:
    if status == SINGLE_CLASS:
        raise SingleClass("training set holds a single class")
    if status == NONCONVERGED:
        raise SolverNonConvergence(max_iter, tol)


def solve_dual(
    K: np.ndarray,
    y: np.ndarray,
    c: float,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    train: np.ndarray | None = None,
) -> DualSolution:
    """Solve the C-SVC dual on a precomputed Gram matrix."""
    K = np.ascontiguousarray(K, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    if train is None:
        train = np.arange(len(y), dtype=np.intp)
    alpha, rho, n_iter, status = core.solve(
        K, y, np.ascontiguousarray(train, dtype=np.intp), float(c), float(tol), int(max_iter)
    )
    _check_status(status, max_iter, tol)
    return DualSolution(np.asarray(alpha), float(rho), int(n_iter))


def dual_objective(alpha: np.ndarray, y: np.ndarray, K: np.ndarray) -> float:
    """C-SVC dual objective ``sum(alpha) - 1/2 (alpha*y)' K (alpha*y)`` (to maximise)."""
    ay = alpha * y
    return float(alpha.sum() - 0.5 * ay @ K @ ay)


@dataclass(frozen=True)
class SvmModel:
    support_points: np.ndarray = field(repr=False)
    dual_coeffs: np.ndarray = field(repr=False)
    bias: float
    kernel: KernelSpec
    c: float
    n_features: int
    n_iter: int = 0
    scaler: ScalerParams | None = None

    @property
    def n_support(self) -> int:
        return len(self.dual_coeffs)

    def decision_function(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != self.n_features:
            raise DimensionMismatch(f"model expects {self.n_features} features, got {x.shape[1]}")
        if self.n_support == 0:
            return np.full(len(x), self.bias)
        return gram(self.kernel, x, self.support_points) @ self.dual_coeffs + self.bias

    def to_dict(self) -> dict:
        return {
            "kernel": self.kernel.to_dict(),
            "c": self.c,
            "bias": self.bias,
            "n_features": self.n_features,
            "support_points": self.support_points.tolist(),
            "dual_coeffs": self.dual_coeffs.tolist(),
            "scaler": None if self.scaler is None else self.scaler.to_dict(),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "SvmModel":
        return cls(
            support_points=np.array(d["support_points"], dtype=np.float64).reshape(
                -1, d["n_features"]
            ),
            dual_coeffs=np.array(d["dual_coeffs"], dtype=np.float64),
            bias=float(d["bias"]),
            kernel=KernelSpec.from_dict(d["kernel"]),
            c=float(d["c"]),
            n_features=int(d["n_features"]),
            scaler=None if d.get("scaler") is None else ScalerParams.from_dict(d["scaler"]),
        )

    @classmethod
    def from_json(cls, text: str) -> "SvmModel":
        return cls.from_dict(json.loads(text))


def train_csvc(
    X,
    y,
    c: float,
    kernel: KernelSpec,
    tol: float = DEFAULT_TOL,
    max_iter: int = DEFAULT_MAX_ITER,
    scaler: ScalerParams | None = None,
) -> SvmModel:
    """Train a C-SVC on rows of ``X`` with labels ``y`` in {-1, +1}.

    Raises:
        SingleClass: only one label value is present.
        SolverNonConvergence: the pair-update cap was reached first.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if len(X) != len(y):
        raise DimensionMismatch(f"{len(X)} points but {len(y)} labels")
    if not np.all(np.abs(y) == 1):
        raise ValueError("labels must be -1 or +1")
    if not c > 0:
        raise ValueError(f"c must be positive, got {c!r}")
    if np.unique(y).size < 2:
        raise SingleClass("training set holds a single class")
    sol = solve_dual(gram(kernel, X), y, c, tol, max_iter)
    sv = np.flatnonzero(sol.alpha > 0)
    return SvmModel(
        support_points=X[sv].copy(),
        dual_coeffs=sol.alpha[sv] * y[sv],
        bias=-sol.rho,
        kernel=kernel,
        c=float(c),
        n_features=X.shape[1],
        n_iter=sol.n_iter,
        scaler=scaler,
    )


def predict(model: SvmModel, x) -> tuple[int, float]:
    """Label and decision value of one point; a zero decision maps to +1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1:
        raise DimensionMismatch("predict takes a single feature vector")
    value = float(model.decision_function(x)[0])
    return (1 if value >= 0 else -1), value


def predict_many(model: SvmModel, X) -> np.ndarray:
    return np.where(model.decision_function(X) >= 0, 1, -1)
