"""Kernel specifications and Gram-matrix evaluation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import DimensionMismatch


@dataclass(frozen=True)
class KernelSpec:
    """``kind`` is ``"rbf"``, ``"linear"`` or ``"poly"``.

    rbf:    exp(-gamma * |x - y|^2)
    linear: x . y
    poly:   (gamma * x . y + coef0) ** degree
    """

    kind: str = "rbf"
    gamma: float = 1.0
    degree: int = 3
    coef0: float = 0.0

    def __post_init__(self):
        if self.kind not in ("rbf", "linear", "poly"):
            raise ValueError(f"unknown kernel kind {self.kind!r}")
        if self.kind in ("rbf", "poly") and not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma!r}")
        if self.kind == "poly" and (int(self.degree) != self.degree or self.degree < 1):
            raise ValueError(f"polynomial degree must be a positive integer, got {self.degree!r}")

    @classmethod
    def rbf(cls, gamma: float) -> "KernelSpec":
        return cls("rbf", gamma=float(gamma))

    @classmethod
    def linear(cls) -> "KernelSpec":
        return cls("linear")

    @classmethod
    def poly(cls, degree: int, gamma: float, coef0: float = 0.0) -> "KernelSpec":
        return cls("poly", gamma=float(gamma), degree=int(degree), coef0=float(coef0))

    def to_dict(self) -> dict:
        if self.kind == "rbf":
            return {"kind": "rbf", "gamma": self.gamma}
        if self.kind == "linear":
            return {"kind": "linear"}
        return {"kind": "poly", "degree": self.degree, "gamma": self.gamma, "coef0": self.coef0}

    @classmethod
    def from_dict(cls, d: dict) -> "KernelSpec":
        return cls(**d)


def kernel_eval(k: KernelSpec, x, y) -> float:
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    if x.shape != y.shape:
        raise DimensionMismatch(f"vectors of length {x.size} and {y.size}")
    if k.kind == "rbf":
        d = x - y
        return float(np.exp(-k.gamma * float(d @ d)))
    dot = float(x @ y)
    if k.kind == "linear":
        return dot
    return float((k.gamma * dot + k.coef0) ** k.degree)


def gram(k: KernelSpec, a: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Kernel matrix between the rows of ``a`` and ``b`` (default ``a``)."""
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = a if b is None else np.atleast_2d(np.asarray(b, dtype=np.float64))
    if a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"{a.shape[1]} vs {b.shape[1]} features")
    if k.kind == "rbf":
        # direct differences rather than the |a|^2 + |b|^2 - 2ab expansion:
        # exact zeros on the diagonal and no cancellation for close points
        diff = a[:, None, :] - b[None, :, :]
        return np.exp(-k.gamma * np.einsum("ijk,ijk->ij", diff, diff))
    dot = a @ b.T
    if k.kind == "linear":
        return np.ascontiguousarray(dot)
    return np.ascontiguousarray((k.gamma * dot + k.coef0) ** k.degree)
