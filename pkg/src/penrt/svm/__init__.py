"""C-SVC with RBF, linear and polynomial kernels."""

from ._backend import BACKEND
from .kernels import KernelSpec, gram, kernel_eval
from .model import (
    DEFAULT_MAX_ITER,
    DEFAULT_TOL,
    DualSolution,
    SvmModel,
    dual_objective,
    predict,
    predict_many,
    solve_dual,
    train_csvc,
)

__all__ = [
    "BACKEND",
    "DEFAULT_MAX_ITER",
    "DEFAULT_TOL",
    "DualSolution",
    "KernelSpec",
    "SvmModel",
    "dual_objective",
    "gram",
    "kernel_eval",
    "predict",
    "predict_many",
    "solve_dual",
    "train_csvc",
]
