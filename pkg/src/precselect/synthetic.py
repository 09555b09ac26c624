"""Synthetic systems and datasets for desk-scale experiments and tests."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sps

from .kernel import Dataset
from .preconditioners import DiagonalPreconditioner
from .sparse import CSRMatrix, as_generator

__all__ = [
    "random_spd",
    "tridiagonal_spd",
    "block_structured_spd",
    "blob_dataset",
    "clear_winner_family",
    "distinct_eigenvalue_matrix",
]


def random_spd(d, rng=None, shift=1.0, density=None) -> CSRMatrix:
    """``B^T B + shift * I`` with Gaussian ``B``; ``density`` sparsifies ``B``."""
    g = as_generator(rng)
    B = g.standard_normal((d, d)) / np.sqrt(d)
    if density is not None:
        B *= g.random((d, d)) < density
    A = B.T @ B + shift * np.eye(d)
    return CSRMatrix.from_dense(0.5 * (A + A.T))


def tridiagonal_spd(d, rng=None, spread=10.0) -> CSRMatrix:
    """Diagonally dominant tridiagonal matrix with diagonal entries varying by ``spread``."""
    g = as_generator(rng)
    diag = 2.0 + spread * g.random(d)
    off = -np.ones(d - 1)
    A = sps.diags([off, diag, off], [-1, 0, 1], shape=(d, d))
    return CSRMatrix.from_scipy(A)


def block_structured_spd(d=500, block=25, rng=None, coupling=0.05, scale_spread=1e3, shuffle=False) -> CSRMatrix:
    """Block-diagonally dominant SPD matrix.

    Dense, internally well-coupled SPD blocks of size ``block`` whose scales
    vary over ``scale_spread``, linked by weak sparse coupling between
    neighbouring blocks. With ``shuffle`` the rows and columns are put through
    a random symmetric permutation, hiding the block structure from natural
    ordering.
    """
    g = as_generator(rng)
    A = np.zeros((d, d))
    for s in range(0, d, block):
        e = min(d, s + block)
        m = e - s
        G = g.standard_normal((m, m))
        blk = G @ G.T / m + 0.5 * np.eye(m)
        scales = np.exp(g.uniform(0.0, np.log(scale_spread), size=m))
        blk = np.sqrt(scales)[:, None] * blk * np.sqrt(scales)[None, :]
        A[s:e, s:e] = blk
    # weak symmetric coupling, kept diagonally dominated by a shift below
    rows = g.integers(0, d, size=4 * d)
    cols = np.clip(rows + g.integers(-2 * block, 2 * block + 1, size=rows.size), 0, d - 1)
    vals = coupling * g.standard_normal(rows.size) * np.sqrt(np.diag(A)[rows] * np.diag(A)[cols])
    C = np.zeros((d, d))
    np.add.at(C, (rows, cols), vals)
    C = C + C.T
    np.fill_diagonal(C, 0.0)
    A += C
    lam_min = np.linalg.eigvalsh(A)[0]
    if lam_min < 1e-2:
        A += (1e-2 - lam_min) * np.eye(d)
    if shuffle:
        p = g.permutation(d)
        A = A[np.ix_(p, p)]
    return CSRMatrix.from_dense(0.5 * (A + A.T))


def blob_dataset(d=500, dim=8, n_blobs=10, rng=None, spread=4.0, radius=0.5) -> Dataset:
    """Mixture of ``n_blobs`` isotropic Gaussian blobs in ``R^dim`` with smooth targets."""
    g = as_generator(rng)
    centers = spread * g.standard_normal((n_blobs, dim))
    labels = g.integers(0, n_blobs, size=d)
    X = centers[labels] + radius * g.standard_normal((d, dim))
    w = g.standard_normal(dim) / np.sqrt(dim)
    y = np.sin(X @ w) + 0.1 * g.standard_normal(d)
    return Dataset(X, y)


def clear_winner_family(d=60, n=10, winner=0, sigma_star=1.0, ratio_range=(3.0, 6.0), rng=None):
    """Diagonal ``A`` and diagonal candidates with prescribed exact stabilities.

    Candidate ``j`` is ``M_j = diag(a / (1 - w_j))`` so that
    ``I - M_j^{-1} A = diag(w_j)`` and its stability is ``||w_j||``. Entries
    of ``w_j`` are negative, so every ``M_j`` is positive definite. The
    ``winner`` candidate has stability ``sigma_star``; the others are drawn
    uniformly from ``ratio_range`` times that. Returns ``(A, candidates,
    exact_values)``.
    """
    g = as_generator(rng)
    a = g.uniform(1.0, 10.0, size=d)
    A = CSRMatrix.from_scipy(sps.diags(a))
    targets = sigma_star * g.uniform(*ratio_range, size=n)
    targets[winner] = sigma_star
    cands = []
    for j, t in enumerate(targets):
        u = g.uniform(0.5, 1.5, size=d)
        w = -t * u / np.linalg.norm(u)
        cands.append(DiagonalPreconditioner(a / (1.0 - w), label=f"D{j}"))
    return A, cands, targets


def distinct_eigenvalue_matrix(d, eigenvalues, rng=None) -> np.ndarray:
    """Dense ``U diag(λ) U^T`` whose spectrum takes only the given values."""
    g = as_generator(rng)
    U, _ = np.linalg.qr(g.standard_normal((d, d)))
    lam = np.resize(np.asarray(eigenvalues, dtype=np.float64), d)
    A = (U * lam) @ U.T
    return 0.5 * (A + A.T)
