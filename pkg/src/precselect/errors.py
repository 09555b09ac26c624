"""Exception types raised across the package."""

import numpy as np


class DimensionMismatchError(ValueError):
    """Operand shapes do not agree."""


class MatrixMarketError(ValueError):
    """A Matrix Market file could not be parsed.

    ``line`` is the 1-based line number of the offending line, or ``None`` when
    the problem is not tied to a single line (e.g. a missing entry count).
    """

    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class NotPositiveDefiniteError(np.linalg.LinAlgError):
    """A block or capacitance matrix failed its Cholesky factorization."""

    def __init__(self, message, block_index=None):
        self.block_index = block_index
        super().__init__(message)


class BreakdownError(np.linalg.LinAlgError):
    """Conjugate gradients hit a non-positive curvature or inner product."""

    def __init__(self, message, iteration):
        self.iteration = iteration
        super().__init__(message)


class ConfigError(ValueError):
    """An experiment configuration is missing fields or is inconsistent."""
