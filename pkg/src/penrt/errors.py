"""Exception hierarchy shared by every module."""


class PenrtError(Exception):
    """Base class for all package errors."""


# ingestion
class MalformedRow(PenrtError, ValueError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class NonMonotonicTime(MalformedRow):
    pass


class EmptyTask(PenrtError, ValueError):
    pass


class UnknownLabel(PenrtError, ValueError):
    pass


class DuplicateSubject(PenrtError, ValueError):
    pass


# dataset
class InvalidIndicator(PenrtError, ValueError):
    pass


class EmptyResult(PenrtError, ValueError):
    pass


class ClassAbsent(PenrtError, ValueError):
    pass


class DegenerateFeature(PenrtError, ValueError):
    pass


# svm
class DimensionMismatch(PenrtError, ValueError):
    pass


class SingleClass(PenrtError, ValueError):
    pass


class SolverNonConvergence(PenrtError, RuntimeError):
    def __init__(self, max_iter, tol):
        self.max_iter = max_iter
        self.tol = tol
        super().__init__(
            f"SMO hit the iteration cap ({max_iter} pair updates) before the "
            f"KKT gap fell below tol={tol:g}"
        )


# model selection
class EmptyGrid(PenrtError, ValueError):
    pass


class BadFoldCount(PenrtError, ValueError):
    pass


class UndefinedMetric(PenrtError, ZeroDivisionError):
    pass


# gaussian regions
class OutOfDomain(PenrtError, ValueError):
    pass


class UnusableCell(PenrtError, ValueError):
    pass


# synth
class UnsampleableCell(PenrtError, ValueError):
    pass
