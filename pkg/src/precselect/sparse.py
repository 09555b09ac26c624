"""Sparse and dense primitives shared by the rest of the package.

Dense matrices and vectors are plain ``numpy.ndarray`` objects. The only
bespoke container is :class:`CSRMatrix`, an immutable square matrix in
compressed sparse row storage that validates its invariants on construction.
"""

from __future__ import annotations

import math
import os
import threading

import numpy as np
import scipy.sparse as sps

from .errors import DimensionMismatchError, MatrixMarketError

__all__ = [
    "CSRMatrix",
    "CountingOperator",
    "spmv",
    "read_matrix_market",
    "write_matrix_market",
    "gaussian_matrix",
    "as_generator",
    "substream",
    "bandwidth",
]


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class CSRMatrix:
    """Immutable square sparse matrix in CSR layout.

    Parameters
    ----------
    dim : int
        Number of rows (and columns).
    row_ptr : array_like of int, length ``dim + 1``
    col_idx : array_like of int, length ``nnz``
        Column indices, strictly increasing within each row.
    values : array_like of float, length ``nnz``
    """

    __slots__ = ("dim", "row_ptr", "col_idx", "values", "_sp", "__weakref__")

    def __init__(self, dim, row_ptr, col_idx, values):
        dim = int(dim)
        if dim < 1:
            raise ValueError(f"dimension must be positive, got {dim}")
        row_ptr = np.asarray(row_ptr, dtype=np.int64)
        col_idx = np.asarray(col_idx, dtype=np.int64)
        values = np.asarray(values, dtype=np.float64)
        if row_ptr.shape != (dim + 1,):
            raise ValueError(f"row_ptr must have length {dim + 1}, got {row_ptr.shape}")
        nnz = col_idx.shape[0]
        if col_idx.ndim != 1 or values.shape != (nnz,):
            raise ValueError("col_idx and values must be 1-D arrays of equal length")
        if row_ptr[0] != 0 or row_ptr[-1] != nnz:
            raise ValueError("row_ptr must start at 0 and end at nnz")
        if np.any(np.diff(row_ptr) < 0):
            raise ValueError("row_ptr must be non-decreasing")
        if nnz and (col_idx.min() < 0 or col_idx.max() >= dim):
            raise ValueError("column index out of range")
        if not np.all(np.isfinite(values)):
            raise ValueError("matrix values must be finite")
        if nnz > 1:
            # strictly increasing within a row: any non-increase must sit on a row boundary
            bad = np.flatnonzero(np.diff(col_idx) <= 0) + 1
            if bad.size and not np.all(np.isin(bad, row_ptr)):
                raise ValueError("column indices must be strictly increasing within each row")

        object.__setattr__(self, "dim", dim)
        object.__setattr__(self, "row_ptr", _readonly(row_ptr))
        object.__setattr__(self, "col_idx", _readonly(col_idx))
        object.__setattr__(self, "values", _readonly(values))
        object.__setattr__(
            self, "_sp", sps.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=(dim, dim))
        )

    def __setattr__(self, name, value):
        raise AttributeError("CSRMatrix is immutable")

    # construction -------------------------------------------------------

    @classmethod
    def from_coo(cls, dim, rows, cols, vals):
        """Build from coordinate triplets, summing duplicates."""
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or rows.max() >= dim or cols.min() < 0 or cols.max() >= dim):
            raise ValueError("coordinate index out of range")
        m = sps.coo_matrix((vals, (rows, cols)), shape=(dim, dim)).tocsr()
        m.sum_duplicates()
        m.sort_indices()
        return cls(dim, m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a, drop_zeros=True):
        a = np.asarray(a, dtype=np.float64)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise DimensionMismatchError(f"expected a square 2-D array, got shape {a.shape}")
        if drop_zeros:
            rows, cols = np.nonzero(a)
        else:
            rows, cols = np.indices(a.shape).reshape(2, -1)
        return cls.from_coo(a.shape[0], rows, cols, a[rows, cols])

    @classmethod
    def from_scipy(cls, m):
        m = sps.csr_matrix(m, dtype=np.float64)
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatchError(f"matrix is non-square: {m.shape}")
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.indptr, m.indices, m.data)

    @classmethod
    def identity(cls, dim):
        return cls(dim, np.arange(dim + 1), np.arange(dim), np.ones(dim))

    # views --------------------------------------------------------------

    @property
    def shape(self):
        return (self.dim, self.dim)

    @property
    def nnz(self):
        return int(self.col_idx.shape[0])

    def to_scipy(self):
        """A fresh scipy CSR copy (the caller may mutate it)."""
        return self._sp.copy()

    def toarray(self):
        return self._sp.toarray()

    def diagonal(self):
        return self._sp.diagonal()

    def submatrix(self, start, stop):
        """Dense copy of the principal block ``A[start:stop, start:stop]``."""
        return self._sp[start:stop, start:stop].toarray()

    def permute(self, perm):
        """Symmetric permutation ``P A P^T`` with ``(PAP^T)[i, j] = A[perm[i], perm[j]]``."""
        perm = np.asarray(perm, dtype=np.int64)
        if perm.shape != (self.dim,) or not np.array_equal(np.sort(perm), np.arange(self.dim)):
            raise ValueError("perm must be a permutation of range(dim)")
        return CSRMatrix.from_scipy(self._sp[perm][:, perm])

    def transpose(self):
        return CSRMatrix.from_scipy(self._sp.T.tocsr())

    @property
    def T(self):
        return self.transpose()

    def matmat(self, x):
        """``A @ x`` for a vector or a ``dim × m`` block of column vectors."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.dim:
            raise DimensionMismatchError(f"operand has {x.shape[0]} rows, matrix has dimension {self.dim}")
        return self._sp @ x

    def __matmul__(self, x):
        return self.matmat(x)

    def __eq__(self, other):
        if not isinstance(other, CSRMatrix):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.row_ptr, other.row_ptr)
            and np.array_equal(self.col_idx, other.col_idx)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return f"CSRMatrix(dim={self.dim}, nnz={self.nnz})"


def spmv(A: CSRMatrix, x) -> np.ndarray:
    """Sparse matrix-vector product ``A x`` (one sweep over the stored entries)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != A.dim:
        raise DimensionMismatchError(f"vector of length {x.shape} does not match dimension {A.dim}")
    return A._sp @ x


class CountingOperator:
    """Wraps a square operator and counts matrix-vector products.

    Each column of a block operand counts as one product. ``op`` may be a
    :class:`CSRMatrix`, a dense array, a scipy sparse matrix, or any object
    with ``shape`` and ``__matmul__``. Safe to share between threads.
    """

    def __init__(self, op):
        if isinstance(op, CountingOperator):
            op = op.op
        shape = getattr(op, "shape", None)
        if shape is None or len(shape) != 2 or shape[0] != shape[1]:
            raise DimensionMismatchError(f"operator must be square, got shape {shape}")
        self.op = op
        self.dim = int(shape[0])
        self._count = 0
        self._lock = threading.Lock()

    @property
    def shape(self):
        return (self.dim, self.dim)

    @property
    def count(self):
        return self._count

    def reset(self):
        with self._lock:
            self._count = 0

    def __matmul__(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape[0] != self.dim:
            raise DimensionMismatchError(f"operand has {x.shape[0]} rows, operator has dimension {self.dim}")
        y = self.op @ x
        with self._lock:
            self._count += 1 if x.ndim == 1 else x.shape[1]
        return y


def operator_dim(op) -> int:
    shape = getattr(op, "shape", None)
    if shape is None or len(shape) != 2 or shape[0] != shape[1]:
        raise DimensionMismatchError(f"operator must be square, got shape {shape}")
    return int(shape[0])


# --------------------------------------------------------------------------
# Matrix Market


_MM_BANNER = "%%matrixmarket"


def read_matrix_market(path) -> CSRMatrix:
    """Read a real coordinate Matrix Market file into :class:`CSRMatrix`.

    Symmetric files are expanded to full storage and duplicate entries are
    summed. Raises :class:`MatrixMarketError` carrying the line number for
    malformed content, non-square shapes, and pattern or complex fields.
    """
    path = os.fspath(path)
    with open(path, "r") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise MatrixMarketError("empty file", line=1, path=path)

    header = lines[0].strip().split()
    if len(header) != 5 or header[0].lower() != _MM_BANNER:
        raise MatrixMarketError("malformed header, expected '%%MatrixMarket matrix coordinate <field> <symmetry>'",
                                line=1, path=path)
    obj, fmt, field, symmetry = (h.lower() for h in header[1:])
    if obj != "matrix":
        raise MatrixMarketError(f"unsupported object '{obj}'", line=1, path=path)
    if fmt != "coordinate":
        raise MatrixMarketError(f"unsupported format '{fmt}', only coordinate is supported", line=1, path=path)
    if field in ("pattern", "complex"):
        raise MatrixMarketError(f"unsupported field '{field}', only real matrices are supported", line=1, path=path)
    if field not in ("real", "integer", "double"):
        raise MatrixMarketError(f"unknown field '{field}'", line=1, path=path)
    if symmetry not in ("general", "symmetric"):
        raise MatrixMarketError(f"unsupported symmetry '{symmetry}'", line=1, path=path)

    lineno = 1
    size = None
    for lineno in range(2, len(lines) + 1):
        s = lines[lineno - 1].strip()
        if not s or s.startswith("%"):
            continue
        parts = s.split()
        try:
            size = tuple(int(p) for p in parts)
        except ValueError:
            raise MatrixMarketError(f"malformed size line '{s}'", line=lineno, path=path) from None
        if len(size) != 3 or min(size) < 0:
            raise MatrixMarketError(f"malformed size line '{s}'", line=lineno, path=path)
        break
    if size is None:
        raise MatrixMarketError("missing size line", path=path)
    nrows, ncols, nnz = size
    if nrows != ncols:
        raise MatrixMarketError(f"non-square matrix ({nrows} x {ncols})", line=lineno, path=path)
    if nrows < 1:
        raise MatrixMarketError("matrix dimension must be positive", line=lineno, path=path)

    rows = np.empty(nnz, dtype=np.int64)
    cols = np.empty(nnz, dtype=np.int64)
    vals = np.empty(nnz, dtype=np.float64)
    count = 0
    for lineno in range(lineno + 1, len(lines) + 1):
        s = lines[lineno - 1].strip()
        if not s or s.startswith("%"):
            continue
        if count >= nnz:
            raise MatrixMarketError(f"more entries than the declared {nnz}", line=lineno, path=path)
        parts = s.split()
        if len(parts) != 3:
            raise MatrixMarketError(f"expected 'row col value', got '{s}'", line=lineno, path=path)
        try:
            i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise MatrixMarketError(f"cannot parse entry '{s}'", line=lineno, path=path) from None
        if not (1 <= i <= nrows and 1 <= j <= ncols):
            raise MatrixMarketError(f"index ({i}, {j}) out of range", line=lineno, path=path)
        if not math.isfinite(v):
            raise MatrixMarketError(f"non-finite value '{parts[2]}'", line=lineno, path=path)
        if symmetry == "symmetric" and j > i:
            raise MatrixMarketError(f"entry ({i}, {j}) above the diagonal in symmetric storage",
                                    line=lineno, path=path)
        rows[count], cols[count], vals[count] = i - 1, j - 1, v
        count += 1
    if count != nnz:
        raise MatrixMarketError(f"expected {nnz} entries, found {count}", line=len(lines), path=path)

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
    return CSRMatrix.from_coo(nrows, rows, cols, vals)


def write_matrix_market(path, A: CSRMatrix, comment=None):
    """Write ``A`` as a general real coordinate file (full storage, 1-based)."""
    rows = np.repeat(np.arange(A.dim), np.diff(A.row_ptr))
    with open(path, "w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        if comment:
            for line in str(comment).splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.dim} {A.dim} {A.nnz}\n")
        for i, j, v in zip(rows, A.col_idx, A.values):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")


# --------------------------------------------------------------------------
# Random streams


def as_generator(rng=None) -> np.random.Generator:
    """Coerce ``None``, an int seed, a ``SeedSequence`` or a ``Generator``."""
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def substream(seed: int, *offsets: int) -> np.random.Generator:
    """Independent generator for ``(seed, offsets...)``.

    Streams with different offsets are statistically independent and each is
    reproducible on its own, so work can be split across threads or trials
    without changing results.
    """
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(o) for o in offsets))
    return np.random.Generator(np.random.PCG64(ss))


def gaussian_matrix(d: int, k: int, scale: float, rng=None) -> np.ndarray:
    """``d × k`` matrix with i.i.d. ``N(0, scale)`` entries (``scale`` is the variance)."""
    if d < 1 or k < 1:
        raise ValueError(f"d and k must be positive, got d={d}, k={k}")
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    g = as_generator(rng)
    return np.asfortranarray(g.standard_normal((d, k)) * math.sqrt(scale))


def bandwidth(A) -> int:
    """Half-bandwidth ``max |i - j|`` over stored entries of ``A`` (CSR or dense)."""
    if isinstance(A, CSRMatrix):
        rows = np.repeat(np.arange(A.dim), np.diff(A.row_ptr))
        cols = A.col_idx
    else:
        rows, cols = np.nonzero(np.asarray(A))
    if rows.size == 0:
        return 0
    return int(np.max(np.abs(rows - cols)))


def pattern_graph(A: CSRMatrix) -> list:
    """Adjacency lists of the undirected graph of ``A + A^T`` without self loops."""
    pat = sps.csr_matrix((np.ones(A.nnz, dtype=np.int8), A.col_idx, A.row_ptr), shape=A.shape)
    sym = (pat + pat.T).tocsr()
    sym.setdiag(0)
    sym.eliminate_zeros()
    sym.sort_indices()
    return [sym.indices[sym.indptr[i]:sym.indptr[i + 1]] for i in range(A.dim)]
