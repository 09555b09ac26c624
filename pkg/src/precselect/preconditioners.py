"""Candidate preconditioners: identity, block-diagonal pinches, RCM-reordered pinches.

Every preconditioner exposes :meth:`Preconditioner.apply`, which returns
``M^{-1} v`` and bumps a thread-safe solve counter by the number of columns
solved. Factorizations are done once, at construction.
"""

from __future__ import annotations

import threading
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionMismatchError, NotPositiveDefiniteError
from .sparse import CSRMatrix, pattern_graph

__all__ = [
    "Preconditioner",
    "IdentityPreconditioner",
    "DiagonalPreconditioner",
    "BlockPinchPreconditioner",
    "BlockDiagonalSolver",
    "BlockSpec",
    "identity",
    "block_pinch",
    "rcm_block_pinch",
    "rcm_ordering",
    "apply",
    "build_candidates",
]


class Preconditioner:
    """Base class: a linear map ``v -> M^{-1} v`` on ``R^dim``.

    Subclasses implement ``_solve`` for a ``dim × m`` block and ``to_dense``
    (the materialized ``M`` itself, meant for test-scale oracles only).
    """

    kind = "generic"

    def __init__(self, dim, label=None):
        self.dim = int(dim)
        self.label = label or self.kind
        self._solves = 0
        self._lock = threading.Lock()

    @property
    def shape(self):
        return (self.dim, self.dim)

    @property
    def solve_count(self):
        return self._solves

    def reset_count(self):
        with self._lock:
            self._solves = 0

    def apply(self, v):
        """Return ``M^{-1} v`` for a vector or a block of column vectors."""
        v = np.asarray(v, dtype=np.float64)
        if v.ndim not in (1, 2) or v.shape[0] != self.dim:
            raise DimensionMismatchError(
                f"operand of shape {v.shape} does not match preconditioner dimension {self.dim}")
        ncols = 1 if v.ndim == 1 else v.shape[1]
        out = self._solve(v.reshape(self.dim, -1)).reshape(v.shape)
        with self._lock:
            self._solves += ncols
        return out

    def _solve(self, V):
        raise NotImplementedError

    def to_dense(self):
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}({self.label!r}, dim={self.dim})"


class IdentityPreconditioner(Preconditioner):
    """``M = I``; equivalent to running without a preconditioner."""

    kind = "identity"

    def __init__(self, dim, label="I"):
        super().__init__(dim, label)

    def _solve(self, V):
        return V.copy()

    def to_dense(self):
        return np.eye(self.dim)


class DiagonalPreconditioner(Preconditioner):
    kind = "diagonal"

    def __init__(self, diag, label="Diag"):
        diag = np.asarray(diag, dtype=np.float64)
        if diag.ndim != 1 or np.any(diag == 0) or not np.all(np.isfinite(diag)):
            raise ValueError("diagonal must be a finite 1-D array with no zeros")
        super().__init__(diag.shape[0], label)
        self.diag = diag

    def _solve(self, V):
        return V / self.diag[:, None]

    def to_dense(self):
        return np.diag(self.diag)


class BlockDiagonalSolver:
    """Cholesky-factored block-diagonal matrix with contiguous diagonal blocks.

    ``blocks[m]`` is the dense SPD block covering rows
    ``offsets[m]:offsets[m + 1]``. Equal-sized blocks are solved in one batched
    pass through their inverse Cholesky factors; a lone block of a given size
    goes through ``cho_solve``.
    """

    def __init__(self, blocks):
        self.sizes = np.array([b.shape[0] for b in blocks], dtype=np.int64)
        self.offsets = np.concatenate([[0], np.cumsum(self.sizes)])
        self.dim = int(self.offsets[-1])
        self.factors = []
        for m, block in enumerate(blocks):
            try:
                self.factors.append(sla.cholesky(block, lower=True, check_finite=True))
            except (np.linalg.LinAlgError, ValueError):
                raise NotPositiveDefiniteError(
                    f"block not positive definite, block index {m}", block_index=m) from None
        self._groups = []
        for size in np.unique(self.sizes):
            members = np.flatnonzero(self.sizes == size)
            if members.size == 1:
                m = int(members[0])
                self._groups.append(("single", slice(self.offsets[m], self.offsets[m + 1]), self.factors[m]))
            else:
                idx = self.offsets[members][:, None] + np.arange(size)[None, :]
                linv = np.stack([
                    sla.solve_triangular(self.factors[m], np.eye(size), lower=True) for m in members
                ])
                self._groups.append(("batch", idx, linv))

    def solve(self, V):
        """Solve ``B Z = V`` for a ``dim × m`` block ``V``."""
        Z = np.empty_like(V)
        for kind, where, fac in self._groups:
            if kind == "single":
                Z[where] = sla.cho_solve((fac, True), V[where], check_finite=False)
            else:
                X = V[where]                      # (g, s, m)
                Y = np.matmul(fac, X)
                Z[where] = np.matmul(np.swapaxes(fac, 1, 2), Y)
        return Z

    def to_dense(self):
        return sla.block_diag(*[L @ L.T for L in self.factors])

    def flops_per_column(self):
        """Approximate flop count of one solve (two triangular sweeps per block)."""
        return int(2 * np.sum(self.sizes.astype(np.int64) ** 2))


class BlockPinchPreconditioner(Preconditioner):
    """Block-diagonal pinching of ``A`` with block size ``block_size``.

    With ``ordering="rcm"`` the pinching is taken of ``P A P^T`` where ``P`` is a
    Reverse Cuthill-McKee permutation, so that ``M^{-1} = P^T B^{-1} P``.
    Blocks are ``A[mℓ:min(d,(m+1)ℓ), mℓ:min(d,(m+1)ℓ)]`` for ``m = 0, 1, ...``.
    """

    kind = "block_pinch"

    def __init__(self, A: CSRMatrix, block_size: int, ordering="natural", label=None):
        if not isinstance(A, CSRMatrix):
            A = CSRMatrix.from_dense(A)
        block_size = int(block_size)
        if block_size < 1:
            raise ValueError(f"block size must be at least 1, got {block_size}")
        if ordering not in ("natural", "rcm"):
            raise ValueError(f"unknown ordering {ordering!r}")
        prefix = "Blk" if ordering == "natural" else "RCM"
        super().__init__(A.dim, label or f"{prefix}_{block_size}")
        self.block_size = block_size
        self.ordering = ordering
        self.perm = rcm_ordering(A) if ordering == "rcm" else None
        Ap = A.permute(self.perm) if self.perm is not None else A
        d = A.dim
        blocks = [Ap.submatrix(s, min(d, s + block_size)) for s in range(0, d, block_size)]
        self.solver = BlockDiagonalSolver(blocks)

    def _solve(self, V):
        if self.perm is None:
            return self.solver.solve(V)
        out = np.empty_like(V)
        out[self.perm] = self.solver.solve(V[self.perm])
        return out

    def to_dense(self):
        B = self.solver.to_dense()
        if self.perm is None:
            return B
        M = np.empty_like(B)
        M[np.ix_(self.perm, self.perm)] = B
        return M


def identity(dim) -> IdentityPreconditioner:
    return IdentityPreconditioner(dim)


def block_pinch(A: CSRMatrix, block_size: int) -> BlockPinchPreconditioner:
    """``Blk_ℓ``: block-diagonal pinch of ``A`` in its natural ordering."""
    return BlockPinchPreconditioner(A, block_size, ordering="natural")


def rcm_block_pinch(A: CSRMatrix, block_size: int) -> BlockPinchPreconditioner:
    """``RCM_ℓ``: block-diagonal pinch after a Reverse Cuthill-McKee reordering."""
    return BlockPinchPreconditioner(A, block_size, ordering="rcm")


def apply(M: Preconditioner, v) -> np.ndarray:
    return M.apply(v)


# --------------------------------------------------------------------------
# Reverse Cuthill-McKee


def _bfs_levels(adj, start, allowed=None):
    """Level structure rooted at ``start``; returns the list of levels."""
    seen = {start}
    levels = [[start]]
    while True:
        nxt = []
        for u in levels[-1]:
            for w in adj[u]:
                w = int(w)
                if w not in seen:
                    seen.add(w)
                    nxt.append(w)
        if not nxt:
            return levels
        levels.append(nxt)


def _pseudo_peripheral(adj, degree, start):
    """George-Liu iteration: hop to a min-degree vertex of the last level until
    the eccentricity stops growing."""
    levels = _bfs_levels(adj, start)
    node = start
    while True:
        last = levels[-1]
        cand = min(last, key=lambda u: (degree[u], u))
        cand_levels = _bfs_levels(adj, cand)
        if len(cand_levels) <= len(levels):
            return node
        node, levels = cand, cand_levels


def rcm_ordering(A: CSRMatrix) -> np.ndarray:
    """Reverse Cuthill-McKee ordering of the graph of ``A + A^T``.

    Returns ``perm`` with ``perm[new] = old``. Each connected component (taken
    in order of its lowest-index vertex) is traversed breadth-first from a
    pseudo-peripheral vertex, visiting neighbours by increasing degree with
    ties broken by index; the concatenated order is then reversed.
    """
    adj = pattern_graph(A)
    d = A.dim
    degree = np.array([len(a) for a in adj], dtype=np.int64)
    # neighbours presorted by (degree, index)
    adj_sorted = [a[np.lexsort((a, degree[a]))] if len(a) else a for a in adj]
    visited = np.zeros(d, dtype=bool)
    order = []
    for root in range(d):
        if visited[root]:
            continue
        comp = [v for lvl in _bfs_levels(adj, root) for v in lvl]
        start = min(comp, key=lambda u: (degree[u], u))
        start = _pseudo_peripheral(adj, degree, start)
        visited[start] = True
        queue = deque([start])
        while queue:
            u = queue.popleft()
            order.append(u)
            for w in adj_sorted[u]:
                if not visited[w]:
                    visited[w] = True
                    queue.append(int(w))
    return np.array(order[::-1], dtype=np.int64)


# --------------------------------------------------------------------------
# Candidate specs


@dataclass(frozen=True)
class BlockSpec:
    """Declarative candidate: ``kind`` is ``identity``, ``blk`` or ``rcm``."""

    kind: str
    block_size: int = 1

    def __post_init__(self):
        if self.kind not in ("identity", "blk", "rcm"):
            raise ValueError(f"unknown candidate kind {self.kind!r}")
        if self.kind != "identity" and int(self.block_size) < 1:
            raise ValueError(f"block size must be at least 1, got {self.block_size}")

    @classmethod
    def parse(cls, obj):
        """Accept ``{"kind": ..., "block_size": ...}`` or a label like ``"Blk_10"``."""
        if isinstance(obj, BlockSpec):
            return obj
        if isinstance(obj, str):
            s = obj.strip().lower()
            if s in ("i", "identity", "none"):
                return cls("identity")
            for prefix in ("blk", "rcm"):
                if s.startswith(prefix):
                    return cls(prefix, int(s[len(prefix):].lstrip("_")))
            raise ValueError(f"cannot parse candidate {obj!r}")
        kind = str(obj["kind"]).lower()
        return cls(kind, int(obj.get("block_size", 1)))

    @property
    def label(self):
        if self.kind == "identity":
            return "I"
        return f"{'Blk' if self.kind == 'blk' else 'RCM'}_{self.block_size}"

    def build(self, A: CSRMatrix) -> Preconditioner:
        if self.kind == "identity":
            return IdentityPreconditioner(A.dim)
        return BlockPinchPreconditioner(A, self.block_size, "natural" if self.kind == "blk" else "rcm")


def build_candidates(A: CSRMatrix, specs) -> list:
    return [BlockSpec.parse(s).build(A) for s in specs]
