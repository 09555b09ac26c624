import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from precselect.errors import DimensionMismatchError, MatrixMarketError
from precselect.sparse import (
    CSRMatrix,
    CountingOperator,
    bandwidth,
    gaussian_matrix,
    read_matrix_market,
    spmv,
    substream,
    write_matrix_market,
)

from conftest import random_sparse_dense


def test_spmv_identity():
    I3 = CSRMatrix.identity(3)
    np.testing.assert_array_equal(spmv(I3, [1.0, 2.0, 3.0]), [1.0, 2.0, 3.0])


def test_spmv_diagonal():
    D = CSRMatrix.from_dense(np.diag([2.0, 3.0]))
    np.testing.assert_array_equal(spmv(D, [1.0, 1.0]), [2.0, 3.0])


def test_spmv_matches_dense_multiply(rng):
    a = random_sparse_dense(rng, 5, 12)
    A = CSRMatrix.from_dense(a)
    assert A.nnz == 12
    x = np.array([0.5, -1.0, 2.0, 3.0, -0.25])
    np.testing.assert_allclose(spmv(A, x), a @ x, rtol=1e-15, atol=1e-15)


def test_spmv_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        spmv(CSRMatrix.identity(3), np.ones(4))


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 12), seed=st.integers(0, 2**31 - 1), density=st.floats(0.05, 1.0))
def test_spmv_basis_vectors_reconstruct_columns(d, seed, density):
    g = np.random.default_rng(seed)
    a = g.standard_normal((d, d)) * (g.random((d, d)) < density)
    A = CSRMatrix.from_dense(a)
    for j in range(d):
        e = np.zeros(d)
        e[j] = 1.0
        np.testing.assert_array_equal(spmv(A, e), a[:, j])


class TestCSRInvariants:
    def test_rejects_unsorted_columns(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            CSRMatrix(2, [0, 2, 2], [1, 0], [1.0, 1.0])

    def test_rejects_duplicate_columns(self):
        with pytest.raises(ValueError, match="strictly increasing"):
            CSRMatrix(2, [0, 2, 2], [0, 0], [1.0, 1.0])

    def test_row_boundaries_may_restart_columns(self):
        A = CSRMatrix(2, [0, 2, 4], [0, 1, 0, 1], [1.0, 2.0, 3.0, 4.0])
        np.testing.assert_array_equal(A.toarray(), [[1, 2], [3, 4]])

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="finite"):
            CSRMatrix(1, [0, 1], [0], [np.nan])

    def test_rejects_bad_row_ptr(self):
        with pytest.raises(ValueError):
            CSRMatrix(2, [0, 2, 1], [0, 1], [1.0, 1.0])
        with pytest.raises(ValueError):
            CSRMatrix(2, [1, 1, 2], [0, 1], [1.0, 1.0])

    def test_rejects_out_of_range_column(self):
        with pytest.raises(ValueError, match="range"):
            CSRMatrix(2, [0, 1, 1], [2], [1.0])

    def test_immutable(self):
        A = CSRMatrix.identity(2)
        with pytest.raises(AttributeError):
            A.dim = 3
        with pytest.raises(ValueError):
            A.values[0] = 5.0

    def test_from_coo_sums_duplicates(self):
        A = CSRMatrix.from_coo(2, [0, 0, 1], [0, 0, 1], [1.0, 1.0, 3.0])
        np.testing.assert_array_equal(A.toarray(), [[2.0, 0.0], [0.0, 3.0]])

    def test_permute_matches_dense(self, rng):
        a = random_sparse_dense(rng, 7, 20)
        p = rng.permutation(7)
        np.testing.assert_array_equal(CSRMatrix.from_dense(a).permute(p).toarray(), a[np.ix_(p, p)])


class TestMatrixMarket:
    def write(self, tmp_path, text, name="m.mtx"):
        path = tmp_path / name
        path.write_text(text)
        return path

    def test_symmetric_expansion(self, tmp_path):
        path = self.write(tmp_path, "%%MatrixMarket matrix coordinate real symmetric\n"
                                    "% a comment\n2 2 3\n1 1 2\n2 1 1\n2 2 2\n")
        A = read_matrix_market(path)
        assert A.nnz == 4
        np.testing.assert_array_equal(A.toarray(), [[2.0, 1.0], [1.0, 2.0]])

    def test_duplicates_summed(self, tmp_path):
        path = self.write(tmp_path, "%%MatrixMarket matrix coordinate real general\n1 1 2\n1 1 1\n1 1 1\n")
        assert read_matrix_market(path).toarray()[0, 0] == 2.0

    def test_non_square(self, tmp_path):
        path = self.write(tmp_path, "%%MatrixMarket matrix coordinate real general\n3 4 1\n1 1 1.0\n")
        with pytest.raises(MatrixMarketError, match="non-square") as info:
            read_matrix_market(path)
        assert info.value.line == 2

    @pytest.mark.parametrize("field", ["pattern", "complex"])
    def test_unsupported_fields(self, tmp_path, field):
        path = self.write(tmp_path, f"%%MatrixMarket matrix coordinate {field} general\n1 1 1\n1 1\n")
        with pytest.raises(MatrixMarketError, match=field) as info:
            read_matrix_market(path)
        assert info.value.line == 1

    def test_malformed_header(self, tmp_path):
        path = self.write(tmp_path, "%MatrixMarket nonsense\n1 1 1\n1 1 1\n")
        with pytest.raises(MatrixMarketError, match="header"):
            read_matrix_market(path)

    def test_bad_entry_reports_line(self, tmp_path):
        path = self.write(tmp_path, "%%MatrixMarket matrix coordinate real general\n%\n2 2 2\n1 1 1.0\n"
                                    "2 x 1.0\n")
        with pytest.raises(MatrixMarketError) as info:
            read_matrix_market(path)
        assert info.value.line == 5
        assert ":5" in str(info.value)

    def test_entry_count_mismatch(self, tmp_path):
        path = self.write(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 3\n1 1 1.0\n")
        with pytest.raises(MatrixMarketError, match="expected 3 entries"):
            read_matrix_market(path)

    def test_index_out_of_range(self, tmp_path):
        path = self.write(tmp_path, "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1.0\n")
        with pytest.raises(MatrixMarketError, match="out of range"):
            read_matrix_market(path)

    @settings(max_examples=25, deadline=None)
    @given(d=st.integers(1, 10), seed=st.integers(0, 2**31 - 1))
    def test_round_trip(self, tmp_path_factory, d, seed):
        g = np.random.default_rng(seed)
        a = g.standard_normal((d, d)) * (g.random((d, d)) < 0.4)
        A = CSRMatrix.from_dense(a)
        path = tmp_path_factory.mktemp("mm") / "rt.mtx"
        write_matrix_market(path, A, comment="round trip")
        assert read_matrix_market(path) == A


class TestGaussian:
    def test_deterministic(self):
        np.testing.assert_array_equal(gaussian_matrix(20, 5, 0.2, 7), gaussian_matrix(20, 5, 0.2, 7))

    def test_moments(self):
        d, k, scale = 1000, 50, 1.0 / 50
        Q = gaussian_matrix(d, k, scale, substream(3))
        assert Q.shape == (d, k)
        assert abs(Q.mean()) <= 4 * math.sqrt(scale / (d * k))
        assert abs(Q.var(ddof=1) / scale - 1.0) <= 0.10

    def test_substreams_independent(self):
        d = 20_000
        cols = np.column_stack([substream(11, j).standard_normal(d) for j in range(6)])
        C = np.corrcoef(cols, rowvar=False)
        off = C[~np.eye(6, dtype=bool)]
        # |r| for independent columns is ~ N(0, 1/d); 5 sigma bound
        assert np.max(np.abs(off)) < 5 / math.sqrt(d)

    @pytest.mark.parametrize("args", [(0, 1, 1.0), (1, 0, 1.0), (2, 2, 0.0)])
    def test_preconditions(self, args):
        with pytest.raises(ValueError):
            gaussian_matrix(*args)


def test_counting_operator_counts_columns():
    op = CountingOperator(CSRMatrix.identity(4))
    op @ np.ones(4)
    op @ np.ones((4, 3))
    assert op.count == 4


def test_bandwidth():
    assert bandwidth(np.eye(3)) == 0
    assert bandwidth(CSRMatrix.from_dense(np.diag([1.0, 1.0], 1) + np.eye(3))) == 1
