"""Exception types raised across the package."""

import numpy as np


class ParameterError(ValueError):
    """An argument is outside its allowed domain."""


class SymmetryError(ValueError):
    """A matrix that must be symmetric is not."""


class UndefinedRatioError(ValueError):
    """A ratio was requested over an empty set (e.g. an edgeless graph)."""


class ConditioningError(np.linalg.LinAlgError):
    """A linear solve or factorization failed even after jitter escalation.

    Attributes
    ----------
    condition : float
        Estimated 2-norm condition number of the offending matrix.
    """

    def __init__(self, message, condition=float("nan")):
        super().__init__(f"{message} (condition estimate {condition:.3e})")
        self.condition = condition


class DataFormatError(ValueError):
    """A dataset file could not be parsed."""

    def __init__(self, path, line, message):
        where = f"{path}:{line}" if line is not None else str(path)
        super().__init__(f"{where}: {message}")
        self.path = path
        self.line = line


class GenerationError(RuntimeError):
    """A synthetic dataset could not satisfy its constraints."""


class OptimizationError(RuntimeError):
    """Every optimizer restart diverged."""

    def __init__(self, message, traces=()):
        super().__init__(message)
        self.traces = list(traces)


class InvariantViolation(RuntimeError):
    """An internal numerical invariant failed (e.g. a non-positive regularizer)."""


class ConfigError(ValueError):
    """An experiment configuration is malformed or inconsistent."""
