"""Kernel regression systems and geometric preconditioners.

The system is ``(K + σ² I) α = y`` with the squared exponential Gram matrix
``K``. Two preconditioners are built from a k-means reordering ``P`` of the
data:

* the block pinch of ``P K P^T`` (one block per cluster) plus ``σ² I``;
* a rank-``r`` approximation ``U Λ U^T`` of ``P K P^T`` plus the block pinch
  of the remainder plus ``σ² I``, solved through the Woodbury identity.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
from scipy.spatial.distance import cdist

from .errors import DimensionMismatchError, NotPositiveDefiniteError
from .krylov import StoppingRule, pcg_solve
from .preconditioners import BlockDiagonalSolver, IdentityPreconditioner, Preconditioner
from .selection import select_preconditioner
from .sparse import as_generator, substream

__all__ = [
    "Dataset",
    "KernelSystem",
    "Clustering",
    "GeometricPreconditioner",
    "gram_matrix",
    "kmeans_cluster",
    "lowrank_approx",
    "geometric_block_precond",
    "geometric_lowrank_precond",
    "woodbury_apply",
    "KernelCell",
    "kernel_experiment",
    "kernel_stopping_rule",
]


@dataclass(frozen=True)
class Dataset:
    points: np.ndarray      # (d, p)
    targets: np.ndarray     # (d,)

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=np.float64))
        y = np.asarray(self.targets, dtype=np.float64).reshape(-1)
        if pts.shape[0] < 1 or pts.shape[1] < 1:
            raise ValueError("dataset needs at least one point and one feature")
        if y.shape[0] != pts.shape[0]:
            raise DimensionMismatchError(f"{pts.shape[0]} points but {y.shape[0]} targets")
        if not (np.all(np.isfinite(pts)) and np.all(np.isfinite(y))):
            raise ValueError("dataset entries must be finite")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "targets", y)

    @property
    def size(self):
        return self.points.shape[0]

    @classmethod
    def from_csv(cls, path, target):
        """Load a CSV with a header row; ``target`` names (or indexes) the target column."""
        with open(os.fspath(path), newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [[float(v) for v in row] for row in reader if row and any(s.strip() for s in row)]
        if isinstance(target, str) and target in header:
            col = header.index(target)
        else:
            try:
                col = int(target)
            except (TypeError, ValueError):
                raise ValueError(f"target column {target!r} not in header {header}") from None
        data = np.array(rows, dtype=np.float64)
        if data.ndim != 2 or data.shape[1] != len(header):
            raise ValueError("CSV rows must all have as many columns as the header")
        return cls(np.delete(data, col, axis=1), data[:, col])


@dataclass
class KernelSystem:
    gram: np.ndarray
    noise: float
    length_scale: float

    def __post_init__(self):
        if not self.noise > 0:
            raise ValueError(f"noise variance must be positive, got {self.noise}")

    @property
    def dim(self):
        return self.gram.shape[0]

    @property
    def shape(self):
        return self.gram.shape

    def matrix(self):
        """Dense ``K + σ² I``."""
        A = self.gram.copy()
        A[np.diag_indices_from(A)] += self.noise
        return A


def gram_matrix(data, length_scale, noise=1e-2) -> KernelSystem:
    """Squared exponential Gram matrix ``exp(-||x_i - x_j||² / (2 ℓ²))``."""
    if not length_scale > 0:
        raise ValueError(f"length scale must be positive, got {length_scale}")
    X = data.points if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=np.float64))
    K = np.exp(cdist(X, X, "sqeuclidean") / (-2.0 * length_scale * length_scale))
    K = 0.5 * (K + K.T)
    np.fill_diagonal(K, 1.0)
    return KernelSystem(K, float(noise), float(length_scale))


# --------------------------------------------------------------------------
# k-means


@dataclass
class Clustering:
    labels: np.ndarray      # cluster id per point
    perm: np.ndarray        # perm[new] = old; points grouped by cluster
    sizes: np.ndarray       # sizes of the non-empty clusters, in permuted order
    centers: np.ndarray
    iterations: int
    cost: float

    @property
    def boundaries(self):
        return np.concatenate([[0], np.cumsum(self.sizes)])


def _kmeanspp(X, c, g):
    d = X.shape[0]
    centers = np.empty((c, X.shape[1]))
    first = int(g.integers(d))
    centers[0] = X[first]
    chosen = {first}
    dist2 = np.sum((X - X[first]) ** 2, axis=1)
    for j in range(1, c):
        total = dist2.sum()
        if total > 0:
            idx = int(g.choice(d, p=dist2 / total))
        else:
            rest = [i for i in range(d) if i not in chosen]
            idx = int(g.choice(rest)) if rest else int(g.integers(d))
        chosen.add(idx)
        centers[j] = X[idx]
        dist2 = np.minimum(dist2, np.sum((X - X[idx]) ** 2, axis=1))
    return centers


def kmeans_cluster(data, c, rng=None, max_iter=100) -> Clustering:
    """k-means++ seeding followed by Lloyd iterations.

    Stops at an assignment fixpoint or after ``max_iter`` sweeps. A cluster
    that loses all its points is re-seeded with the point farthest from its
    current centre. The permutation sorts points by cluster id, keeping the
    original order within a cluster.
    """
    X = data.points if isinstance(data, Dataset) else np.atleast_2d(np.asarray(data, dtype=np.float64))
    d = X.shape[0]
    c = int(c)
    if not 1 <= c <= d:
        raise ValueError(f"cluster count must lie in [1, {d}], got {c}")
    g = as_generator(rng)
    centers = _kmeanspp(X, c, g)
    labels = None
    it = 0
    for it in range(1, max_iter + 1):
        D = cdist(X, centers, "sqeuclidean")
        new = np.argmin(D, axis=1)
        counts = np.bincount(new, minlength=c)
        for j in np.flatnonzero(counts == 0):
            far = int(np.argmax(D[np.arange(d), new]))
            centers[j] = X[far]
            D[:, j] = np.sum((X - X[far]) ** 2, axis=1)
            new[far] = j
            D[far, j] = 0.0
            counts = np.bincount(new, minlength=c)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(c):
            members = labels == j
            if members.any():
                centers[j] = X[members].mean(axis=0)

    cost = float(np.sum((X - centers[labels]) ** 2))
    perm = np.argsort(labels, kind="stable")
    sizes = np.bincount(labels, minlength=c)
    return Clustering(labels=labels, perm=perm, sizes=sizes[sizes > 0], centers=centers,
                      iterations=it, cost=cost)


# --------------------------------------------------------------------------
# Low-rank factor


def lowrank_approx(Kperm, r, rng=None, power_iters=2, oversample=10):
    """Top-``r`` eigenpairs of a symmetric PSD matrix by randomized subspace iteration.

    The subspace ``Q`` comes from ``power_iters`` rounds of subspace
    iteration on ``r + oversample`` Gaussian vectors. The factor is then read
    off the Nyström approximation ``(KQ)(Q^T K Q)^{-1}(KQ)^T`` rather than
    the Rayleigh-Ritz projection ``Q Q^T K Q Q^T``: the Nyström remainder
    ``K - U Λ U^T`` stays positive semidefinite, which the Ritz remainder
    does not when the spectrum is clustered.

    Returns ``(U, lam)`` with orthonormal ``U`` (``d × r'``) and positive
    ``lam`` sorted decreasingly; ``r' < r`` when values at or below
    ``1e-14 * max(lam)`` are dropped.
    """
    K = np.asarray(Kperm, dtype=np.float64)
    d = K.shape[0]
    r = int(r)
    if r < 0 or r >= d:
        raise ValueError(f"rank must lie in [0, {d - 1}], got {r}")
    if r == 0:
        return np.zeros((d, 0)), np.zeros(0)
    g = as_generator(rng)
    width = min(d, r + oversample)
    Y = K @ g.standard_normal((d, width))
    for _ in range(power_iters):
        Qm, _ = np.linalg.qr(Y)
        Y = K @ Qm
    Qm, _ = np.linalg.qr(Y)
    Y = K @ Qm
    # shifted Nyström; the shift keeps Q^T K Q numerically positive definite
    nu = math.sqrt(d) * np.finfo(np.float64).eps * max(np.linalg.norm(Y, 2), np.finfo(np.float64).tiny)
    for _ in range(8):
        Ynu = Y + nu * Qm
        core = Qm.T @ Ynu
        try:
            C = np.linalg.cholesky(0.5 * (core + core.T))
            break
        except np.linalg.LinAlgError:
            nu *= 100.0
    else:
        raise NotPositiveDefiniteError("low-rank factor: matrix is not positive semidefinite")
    B = sla.solve_triangular(C, Ynu.T, lower=True).T          # B B^T = Ynu core^{-1} Ynu^T
    U, sv, _ = np.linalg.svd(B, full_matrices=False)
    lam = np.maximum(sv[:r] ** 2 - nu, 0.0)
    U = U[:, :r]
    keep = lam > 1e-14 * max(lam.max(), 0.0)
    return U[:, keep], lam[keep]


# --------------------------------------------------------------------------
# Preconditioners


class GeometricPreconditioner(Preconditioner):
    """``P^T (U Λ U^T + pinch(P K P^T - U Λ U^T) + σ² I) P``.

    With rank 0 this is the plain cluster-block pinch of ``P K P^T + σ² I``.
    """

    kind = "geometric"

    def __init__(self, system: KernelSystem, clustering: Clustering, rank=0, rng=None, label=None):
        d = system.dim
        if clustering.perm.shape != (d,) or int(np.sum(clustering.sizes)) != d:
            raise DimensionMismatchError("clustering does not cover every row of the system")
        super().__init__(d, label or ("geo_block" if rank == 0 else f"geo_lowrank_{rank}"))
        self.perm = np.asarray(clustering.perm)
        self.noise = system.noise
        Kp = system.gram[np.ix_(self.perm, self.perm)]
        self.U, self.lam = lowrank_approx(Kp, rank, rng) if rank > 0 else (np.zeros((d, 0)), np.zeros(0))
        E = Kp - (self.U * self.lam) @ self.U.T if self.lam.size else Kp
        bounds = clustering.boundaries
        blocks = []
        for s, e in zip(bounds[:-1], bounds[1:]):
            blk = E[s:e, s:e].copy()
            blk[np.diag_indices_from(blk)] += self.noise
            blocks.append(0.5 * (blk + blk.T))
        self.solver = BlockDiagonalSolver(blocks)
        if self.lam.size:
            self.W = self.solver.solve(self.U)                     # B^{-1} U
            cap = np.diag(1.0 / self.lam) + self.U.T @ self.W
            try:
                self.cap_factor = sla.cho_factor(0.5 * (cap + cap.T), lower=True)
            except np.linalg.LinAlgError:
                raise NotPositiveDefiniteError("capacitance matrix not positive definite") from None
        else:
            self.W = None
            self.cap_factor = None

    @property
    def rank(self):
        return int(self.lam.size)

    def _solve(self, V):
        T = self.solver.solve(V[self.perm])
        if self.W is not None:
            T -= self.W @ sla.cho_solve(self.cap_factor, self.U.T @ T, check_finite=False)
        out = np.empty_like(T)
        out[self.perm] = T
        return out

    def permuted_matrix(self):
        """Dense ``U Λ U^T + Ẽ + σ² I`` in the clustered ordering (test scale only)."""
        B = self.solver.to_dense()
        if self.lam.size:
            B = B + (self.U * self.lam) @ self.U.T
        return B

    def to_dense(self):
        Mp = self.permuted_matrix()
        M = np.empty_like(Mp)
        M[np.ix_(self.perm, self.perm)] = Mp
        return M

    def flops_per_apply(self):
        """Flops for one application: block solves plus the rank-``r`` correction."""
        d, r = self.dim, self.rank
        return self.solver.flops_per_column() + (4 * d * r + 2 * r * r if r else 0)


def geometric_block_precond(system: KernelSystem, clustering: Clustering) -> GeometricPreconditioner:
    return GeometricPreconditioner(system, clustering, rank=0)


def geometric_lowrank_precond(system: KernelSystem, clustering: Clustering, rank=25, rng=None):
    return GeometricPreconditioner(system, clustering, rank=rank, rng=rng)


def woodbury_apply(M: GeometricPreconditioner, v) -> np.ndarray:
    """``(U Λ U^T + B)^{-1} v`` via ``B^{-1}v - B^{-1}U (Λ^{-1} + U^T B^{-1} U)^{-1} U^T B^{-1} v``."""
    return M.apply(v)


# --------------------------------------------------------------------------
# Grid experiment


def kernel_stopping_rule(d, max_iterations=10_000):
    """Absolute tolerance ``1e-5 sqrt(d)`` OR relative ``1e-15``."""
    return StoppingRule(relative_tol=1e-15, absolute_tol=1e-5 * math.sqrt(d), max_iterations=max_iterations)


@dataclass
class KernelCell:
    length_scale: float
    noise: float
    iters_none: int
    iters_blk: int
    iters_lowrank: int
    iters_selected: int
    chosen: str
    chosen_index: int
    estimates: list
    converged: dict = field(default_factory=dict)
    chosen_geometric: str | None = None
    iters_selected_geometric: int | None = None
    selection_solves: int = 0
    selection_spmv: int = 0

    @staticmethod
    def _log_ratio(num, den):
        return math.log10(num / den) if num > 0 and den > 0 else (0.0 if num == den else math.nan)

    @property
    def log_ratio_blk(self):
        return self._log_ratio(self.iters_blk, self.iters_none)

    @property
    def log_ratio_lowrank(self):
        return self._log_ratio(self.iters_lowrank, self.iters_none)

    @property
    def log_ratio_selected(self):
        return self._log_ratio(self.iters_selected, self.iters_none)

    def to_dict(self):
        out = {
            "length_scale": self.length_scale,
            "noise": self.noise,
            "iters_none": self.iters_none,
            "iters_blk": self.iters_blk,
            "iters_lowrank": self.iters_lowrank,
            "iters_selected": self.iters_selected,
            "chosen": self.chosen,
            "chosen_index": self.chosen_index,
            "estimates": self.estimates,
            "converged": self.converged,
            "log10_ratio_blk": self.log_ratio_blk,
            "log10_ratio_lowrank": self.log_ratio_lowrank,
            "log10_ratio_selected": self.log_ratio_selected,
            "selection_solves": self.selection_solves,
            "selection_spmv": self.selection_spmv,
        }
        if self.chosen_geometric is not None:
            out["chosen_geometric"] = self.chosen_geometric
            out["iters_selected_geometric"] = self.iters_selected_geometric
            out["log10_ratio_selected_geometric"] = self._log_ratio(self.iters_selected_geometric, self.iters_none)
        return out


def _run_cell(data, clustering, length_scale, noise, rank, k, seed, cell, max_iterations, geometric_only):
    system = gram_matrix(data, length_scale, noise)
    A = system.matrix()
    d = system.dim
    cands = [
        IdentityPreconditioner(d),
        geometric_block_precond(system, clustering),
        geometric_lowrank_precond(system, clustering, rank, rng=substream(seed, 2, cell)),
    ]
    rule = kernel_stopping_rule(d, max_iterations)
    y = data.targets
    solves = [pcg_solve(A, M, y, rule) for M in cands]
    report = select_preconditioner(A, cands, k, rng=substream(seed, 0, cell))
    sel = pcg_solve(A, cands[report.chosen_index], y, rule)
    out = KernelCell(
        length_scale=length_scale,
        noise=noise,
        iters_none=solves[0].iterations,
        iters_blk=solves[1].iterations,
        iters_lowrank=solves[2].iterations,
        iters_selected=sel.iterations,
        chosen=cands[report.chosen_index].label,
        chosen_index=report.chosen_index,
        estimates=report.estimates,
        converged={"none": solves[0].converged, "blk": solves[1].converged,
                   "lowrank": solves[2].converged, "selected": sel.converged},
        selection_solves=report.total_solves,
        selection_spmv=report.total_spmv,
    )
    if geometric_only:
        geo = select_preconditioner(A, cands[1:], k, rng=substream(seed, 3, cell))
        out.chosen_geometric = cands[1 + geo.chosen_index].label
        out.iters_selected_geometric = pcg_solve(A, cands[1 + geo.chosen_index], y, rule).iterations
    return out


def kernel_experiment(data: Dataset, length_scales, noises, rank=25, k=10, seed=0, clusters=None,
                      max_iterations=10_000, geometric_only=False, max_workers=None):
    """Run the (length scale × noise) grid and return one :class:`KernelCell` per pair.

    For each pair the system ``(K + σ² I) α = y`` is solved with no
    preconditioner, the geometric block preconditioner, the rank-``rank``
    geometric preconditioner, and the one chosen among those three by
    :func:`select_preconditioner` with ``k`` probes. ``clusters`` defaults to
    ``ceil(sqrt(d))``. Cells are independent; with ``max_workers > 1`` they run
    on a thread pool and give the same results as a serial run.
    """
    length_scales = list(length_scales)
    noises = list(noises)
    if not length_scales or not noises:
        raise ValueError("parameter grids must be non-empty")
    c = math.ceil(math.sqrt(data.size)) if clusters is None else int(clusters)
    clustering = kmeans_cluster(data, c, rng=substream(seed, 1))
    pairs = [(ls, nz) for nz in noises for ls in length_scales]
    jobs = [(data, clustering, ls, nz, rank, k, seed, i, max_iterations, geometric_only)
            for i, (ls, nz) in enumerate(pairs)]
    if max_workers and max_workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            return list(pool.map(lambda a: _run_cell(*a), jobs))
    return [_run_cell(*a) for a in jobs]
