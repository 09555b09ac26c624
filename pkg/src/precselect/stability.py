"""Randomized estimation of preconditioner stability ``||I - M^{-1} A||_F``.

The estimator draws a Gaussian sketch ``Q`` with i.i.d. ``N(0, 1/k)`` entries
and returns ``||Q - M^{-1}(A Q)||_F``. Its square is an unbiased estimate of
the squared stability and concentrates at the rate given by
:func:`sample_size_stab`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError
from .preconditioners import Preconditioner
from .sparse import CountingOperator, as_generator, gaussian_matrix, operator_dim

__all__ = [
    "StabilityEstimate",
    "stab_estimate",
    "exact_stability",
    "draw_sketch",
    "sketch_residual_norm",
    "sample_size_stab",
    "sample_size_select",
]


@dataclass(frozen=True)
class StabilityEstimate:
    value: float
    k: int
    seed: int | None = None
    solve_count: int = 0
    spmv_count: int = 0

    @property
    def squared(self):
        return self.value * self.value

    def to_dict(self):
        return {
            "value": self.value,
            "k": self.k,
            "seed": self.seed,
            "solve_count": self.solve_count,
            "spmv_count": self.spmv_count,
        }


def draw_sketch(d: int, k: int, rng=None) -> np.ndarray:
    """Sketch matrix ``Q`` (``d × k``, entries ``N(0, 1/k)``)."""
    return gaussian_matrix(d, k, 1.0 / k, rng)


def _check_dims(A, M):
    d = operator_dim(A)
    if M.dim != d:
        raise DimensionMismatchError(f"preconditioner dimension {M.dim} does not match operator dimension {d}")
    return d


def sketch_residual_norm(Q, AQ, M: Preconditioner) -> float:
    """``||Q - M^{-1}(AQ)||_F`` given a sketch and its image under ``A``.

    This is the per-candidate work once ``AQ`` is known; it performs exactly
    ``Q.shape[1]`` preconditioner solves.
    """
    S = Q - M.apply(AQ)
    return float(np.linalg.norm(S))


def stab_estimate(A, M: Preconditioner, k: int, rng=None, *, Q=None, seed=None) -> StabilityEstimate:
    """Estimate ``||I - M^{-1} A||_F`` from ``k`` Gaussian probes.

    Parameters
    ----------
    A : CSRMatrix, ndarray or operator
        Square system matrix; anything supporting ``A @ X`` for a block ``X``.
    M : Preconditioner
    k : int
        Number of sketch columns. Exactly ``k`` products with ``A`` and ``k``
        solves with ``M`` are performed.
    rng : int, Generator or None
        Source of the sketch when ``Q`` is not given.
    Q : ndarray, optional
        Pre-drawn ``d × k`` sketch with ``N(0, 1/k)`` entries, for reuse across
        candidates.
    seed : int, optional
        Recorded verbatim in the result (for reports); does not affect the draw.
    """
    k = int(k)
    if k < 1:
        raise ValueError(f"k must be at least 1, got {k}")
    d = _check_dims(A, M)
    if Q is None:
        if seed is not None and rng is None:
            rng = seed
        Q = draw_sketch(d, k, as_generator(rng))
    else:
        Q = np.asarray(Q, dtype=np.float64)
        if Q.shape != (d, k):
            raise DimensionMismatchError(f"sketch has shape {Q.shape}, expected {(d, k)}")
    op = CountingOperator(A)
    AQ = op @ Q
    value = sketch_residual_norm(Q, AQ, M)
    # one solve per column of AQ; M's own counter may be shared with other threads
    return StabilityEstimate(value=value, k=k, seed=seed, solve_count=AQ.shape[1], spmv_count=op.count)


def exact_stability(A, M: Preconditioner) -> float:
    """``||I - M^{-1} A||_F`` from the ``d`` columns ``e_i - M^{-1} A e_i``.

    Deterministic and exact up to rounding, at the cost of ``d`` products and
    ``d`` solves; no deterministic method can do with fewer.
    """
    d = _check_dims(A, M)
    E = np.eye(d)
    R = E - M.apply(A @ E)
    return float(np.linalg.norm(R))


def _check_eps_delta(eps, delta):
    if not 0.0 < eps < 1.0:
        raise ValueError(f"epsilon must lie in (0, 1), got {eps}")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"delta must lie in (0, 1), got {delta}")


def sample_size_stab(eps: float, delta: float) -> int:
    """Smallest ``k`` with ``k >= 12 / (eps^2 (3 - 2 eps)) * ln(2 / delta)``.

    With that many probes the estimate lies in
    ``[sqrt(1-eps), sqrt(1+eps)] * ||I - M^{-1}A||_F`` with probability at
    least ``1 - delta``.
    """
    _check_eps_delta(eps, delta)
    return math.ceil(12.0 / (eps * eps * (3.0 - 2.0 * eps)) * math.log(2.0 / delta))


def sample_size_select(eps: float, delta: float, n: int) -> int:
    """``k`` for selecting among ``n`` candidates: ``12 / (eps^2 (3 - 2 eps)) * ln(2n / delta)``."""
    _check_eps_delta(eps, delta)
    if int(n) != n or n < 1:
        raise ValueError(f"n must be a positive integer, got {n}")
    return math.ceil(12.0 / (eps * eps * (3.0 - 2.0 * eps)) * math.log(2.0 * n / delta))
