"""Preconditioned conjugate gradients."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BreakdownError, DimensionMismatchError
from .preconditioners import IdentityPreconditioner, Preconditioner
from .sparse import operator_dim

__all__ = ["StoppingRule", "SolveResult", "pcg_solve"]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class StoppingRule:
    """Stop once ``||r|| <= rel * ||b||`` or ``||r|| <= abs`` (whichever is looser)."""

    relative_tol: float | None = 1e-9
    absolute_tol: float | None = None
    max_iterations: int = 50_000

    def __post_init__(self):
        if self.relative_tol is None and self.absolute_tol is None:
            raise ValueError("at least one of relative_tol, absolute_tol must be set")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")

    def threshold(self, b_norm):
        tols = []
        if self.relative_tol is not None:
            tols.append(self.relative_tol * b_norm)
        if self.absolute_tol is not None:
            tols.append(self.absolute_tol)
        return max(tols)


@dataclass
class SolveResult:
    x: np.ndarray
    iterations: int
    converged: bool
    final_residual_norm: float
    residual_history: list = field(default_factory=list)
    true_residual_norm: float = math.nan
    tolerance: float = math.nan
    preconditioner_applies: int = 0
    operator_applies: int = 0


def pcg_solve(A, M: Preconditioner | None, b, rule: StoppingRule = StoppingRule(), x0=None) -> SolveResult:
    """Solve ``A x = b`` by conjugate gradients preconditioned with ``M``.

    ``A`` is any symmetric positive definite operator supporting ``A @ x``
    (a :class:`~precselect.sparse.CSRMatrix`, a dense array, ...). Positive
    definiteness is not checked up front; a non-positive ``p^T A p`` or
    ``r^T z`` raises :class:`BreakdownError`.

    Convergence is tested on the recurrence residual before each iteration.
    Hitting ``max_iterations`` is not an error: the result has
    ``converged=False``. ``residual_history[t]`` is the residual norm after
    iteration ``t + 1``.
    """
    d = operator_dim(A)
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (d,):
        raise DimensionMismatchError(f"right-hand side has shape {b.shape}, expected ({d},)")
    if M is None:
        M = IdentityPreconditioner(d)
    if M.dim != d:
        raise DimensionMismatchError(f"preconditioner dimension {M.dim} does not match {d}")

    tol = rule.threshold(float(np.linalg.norm(b)))
    n_op = n_prec = 0
    if x0 is None:
        x = np.zeros(d)
        r = b.copy()
    else:
        x = np.array(x0, dtype=np.float64)
        if x.shape != (d,):
            raise DimensionMismatchError(f"initial guess has shape {x.shape}, expected ({d},)")
        r = b - A @ x
        n_op += 1

    z = M.apply(r)
    n_prec += 1
    rz = float(r @ z)
    p = z.copy()
    rnorm = float(np.linalg.norm(r))
    history = []
    it = 0
    while rnorm > tol and it < rule.max_iterations:
        if rz <= 0.0:
            raise BreakdownError(
                f"operator or preconditioner not positive definite at iteration {it} (r^T z = {rz:.3e})", it)
        q = A @ p
        n_op += 1
        pq = float(p @ q)
        if pq <= 0.0:
            raise BreakdownError(
                f"operator or preconditioner not positive definite at iteration {it} (p^T A p = {pq:.3e})", it)
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        it += 1
        rnorm = float(np.linalg.norm(r))
        history.append(rnorm)
        z = M.apply(r)
        n_prec += 1
        rz_new = float(r @ z)
        beta = rz_new / rz
        rz = rz_new
        p *= beta
        p += z

    converged = rnorm <= tol
    true_res = float(np.linalg.norm(b - A @ x))
    if converged and true_res > 10.0 * tol:
        log.warning("recurrence residual %.3e converged but true residual is %.3e (tolerance %.3e)",
                    rnorm, true_res, tol)
    return SolveResult(
        x=x,
        iterations=it,
        converged=converged,
        final_residual_norm=rnorm,
        residual_history=history,
        true_residual_norm=true_res,
        tolerance=tol,
        preconditioner_applies=n_prec,
        operator_applies=n_op,
    )
