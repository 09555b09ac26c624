import itertools

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from precselect.errors import DimensionMismatchError, NotPositiveDefiniteError
from precselect.preconditioners import (
    BlockSpec,
    DiagonalPreconditioner,
    IdentityPreconditioner,
    apply,
    block_pinch,
    build_candidates,
    rcm_block_pinch,
    rcm_ordering,
)
from precselect.sparse import CSRMatrix, bandwidth

from conftest import random_spd_dense


def dense_block_solve(a, ell, v):
    """Oracle: solve with the dense block-diagonal pinch of ``a``."""
    d = a.shape[0]
    out = np.empty_like(v)
    for s in range(0, d, ell):
        e = min(d, s + ell)
        out[s:e] = np.linalg.solve(a[s:e, s:e], v[s:e])
    return out


def test_identity_leaves_vector_unchanged(rng):
    v = rng.standard_normal(6)
    np.testing.assert_array_equal(apply(IdentityPreconditioner(6), v), v)


def test_full_block_is_exact_inverse(rng):
    a = random_spd_dense(rng, 12)
    M = block_pinch(CSRMatrix.from_dense(a), 12)
    v = rng.standard_normal(12)
    np.testing.assert_allclose(M.apply(v), np.linalg.solve(a, v), rtol=1e-12)
    # oversized blocks collapse to the same thing
    np.testing.assert_allclose(block_pinch(CSRMatrix.from_dense(a), 50).apply(v), np.linalg.solve(a, v), rtol=1e-12)


def test_unit_blocks_are_jacobi(rng):
    a = random_spd_dense(rng, 9)
    v = rng.standard_normal(9)
    np.testing.assert_allclose(block_pinch(CSRMatrix.from_dense(a), 1).apply(v), v / np.diag(a), rtol=1e-14)


def test_block_layout_4x4_ell3(rng):
    a = random_spd_dense(rng, 4)
    M = block_pinch(CSRMatrix.from_dense(a), 3)
    assert list(M.solver.sizes) == [3, 1]
    expected = np.zeros((4, 4))
    expected[:3, :3] = a[:3, :3]
    expected[3, 3] = a[3, 3]
    np.testing.assert_allclose(M.to_dense(), expected, rtol=1e-14)
    v = rng.standard_normal(4)
    np.testing.assert_allclose(M.apply(v), dense_block_solve(a, 3, v), rtol=1e-12)


@pytest.mark.parametrize("d,ell", [(20, 3), (25, 5), (30, 7), (17, 4)])
def test_batched_blocks_match_dense_oracle(rng, d, ell):
    a = random_spd_dense(rng, d)
    M = block_pinch(CSRMatrix.from_dense(a), ell)
    V = rng.standard_normal((d, 4))
    np.testing.assert_allclose(M.apply(V), dense_block_solve(a, ell, V), rtol=1e-10, atol=1e-12)


def test_rcm_apply_is_permuted_block_solve(rng):
    a = random_spd_dense(rng, 15) * (rng.random((15, 15)) < 0.3)
    a = 0.5 * (a + a.T) + 15 * np.eye(15)
    A = CSRMatrix.from_dense(a)
    M = rcm_block_pinch(A, 4)
    p = M.perm
    P = np.eye(15)[p]                       # (P v)[i] = v[p[i]]
    B = np.zeros((15, 15))
    ap = P @ a @ P.T
    for s in range(0, 15, 4):
        e = min(15, s + 4)
        B[s:e, s:e] = ap[s:e, s:e]
    v = rng.standard_normal(15)
    np.testing.assert_allclose(M.apply(v), P.T @ np.linalg.solve(B, P @ v), rtol=1e-11)
    np.testing.assert_allclose(M.to_dense(), P.T @ B @ P, rtol=1e-14)


def test_not_positive_definite_block():
    a = np.diag([1.0, 1.0, -1.0, 1.0])
    with pytest.raises(NotPositiveDefiniteError, match="block index 1") as info:
        block_pinch(CSRMatrix.from_dense(a), 2)
    assert info.value.block_index == 1


def test_apply_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        IdentityPreconditioner(3).apply(np.ones(4))


def test_solve_counter_counts_columns(rng):
    M = block_pinch(CSRMatrix.from_dense(random_spd_dense(rng, 8)), 3)
    M.apply(np.ones(8))
    M.apply(np.ones((8, 5)))
    assert M.solve_count == 6
    M.reset_count()
    assert M.solve_count == 0


@settings(max_examples=30, deadline=None)
@given(d=st.integers(2, 20), ell=st.integers(1, 25), seed=st.integers(0, 2**31 - 1),
       ordering=st.sampled_from(["blk", "rcm"]))
def test_pinch_of_spd_is_spd_and_linear(d, ell, seed, ordering):
    g = np.random.default_rng(seed)
    B = g.standard_normal((d, d)) * (g.random((d, d)) < 0.5)
    A = CSRMatrix.from_dense(B.T @ B + np.eye(d))
    M = BlockSpec(ordering, ell).build(A)
    Md = M.to_dense()
    L = np.linalg.cholesky(Md)
    assert np.all(np.diag(L) > 0)
    u, v = g.standard_normal(d), g.standard_normal(d)
    alpha, beta = g.standard_normal(2)
    lhs = M.apply(alpha * u + beta * v)
    rhs = alpha * M.apply(u) + beta * M.apply(v)
    assert np.linalg.norm(lhs - rhs) <= 1e-12 * max(np.linalg.norm(lhs), 1.0)


# --- RCM -------------------------------------------------------------------


def _path_matrix(d):
    return np.eye(d) * 2 + np.diag(-np.ones(d - 1), 1) + np.diag(-np.ones(d - 1), -1)


def test_rcm_edgeless_graph_gives_a_permutation():
    p = rcm_ordering(CSRMatrix.identity(7))
    assert sorted(p) == list(range(7))


def test_rcm_shuffled_path_has_bandwidth_one(rng):
    d = 30
    a = _path_matrix(d)
    q = rng.permutation(d)
    shuffled = CSRMatrix.from_dense(a[np.ix_(q, q)])
    assert bandwidth(shuffled) > 1
    p = rcm_ordering(shuffled)
    assert bandwidth(shuffled.permute(p)) == 1


def test_rcm_star_within_one_of_optimum():
    star = np.eye(5)
    star[0, 1:] = star[1:, 0] = 1.0
    A = CSRMatrix.from_dense(star)
    best = min(bandwidth(star[np.ix_(p, p)]) for p in itertools.permutations(range(5)))
    assert best == 2
    assert bandwidth(A.permute(rcm_ordering(A))) <= best + 1


def test_rcm_multiple_components():
    a = sla.block_diag(_path_matrix(4), np.eye(1), _path_matrix(3))
    p = rcm_ordering(CSRMatrix.from_dense(a))
    assert sorted(p) == list(range(8))
    assert bandwidth(CSRMatrix.from_dense(a).permute(p)) == 1


def test_rcm_uses_symmetrized_pattern():
    a = np.eye(4)
    a[0, 3] = 1.0                           # one-sided entry still links 0 and 3
    p = rcm_ordering(CSRMatrix.from_dense(a))
    pos = np.argsort(p)
    assert abs(pos[0] - pos[3]) == 1


@settings(max_examples=40, deadline=None)
@given(d=st.integers(1, 40), seed=st.integers(0, 2**31 - 1), density=st.floats(0.0, 0.3))
def test_rcm_is_bijection(d, seed, density):
    g = np.random.default_rng(seed)
    a = (g.random((d, d)) < density) * 1.0 + np.eye(d)
    p = rcm_ordering(CSRMatrix.from_dense(a))
    assert np.array_equal(np.sort(p), np.arange(d))


def test_rcm_recovers_shuffled_band(rng):
    d, band = 60, 3
    a = np.zeros((d, d))
    for off in range(-band, band + 1):
        a += np.diag(np.ones(d - abs(off)), off)
    q = rng.permutation(d)
    A = CSRMatrix.from_dense(a[np.ix_(q, q)])
    assert bandwidth(A.permute(rcm_ordering(A))) <= 2 * band


def test_rcm_deterministic(rng):
    a = (rng.random((25, 25)) < 0.1) * 1.0 + np.eye(25)
    A = CSRMatrix.from_dense(a)
    np.testing.assert_array_equal(rcm_ordering(A), rcm_ordering(A))


# --- specs -----------------------------------------------------------------


@pytest.mark.parametrize("text,spec", [
    ("I", BlockSpec("identity")),
    ("Blk_10", BlockSpec("blk", 10)),
    ("rcm25", BlockSpec("rcm", 25)),
    ({"kind": "blk", "block_size": 3}, BlockSpec("blk", 3)),
])
def test_blockspec_parse(text, spec):
    assert BlockSpec.parse(text) == spec


def test_blockspec_rejects_unknown():
    with pytest.raises(ValueError):
        BlockSpec.parse("ilu")
    with pytest.raises(ValueError):
        BlockSpec("blk", 0)


def test_build_candidates_labels(spd30):
    labels = [M.label for M in build_candidates(spd30, ["I", "Blk_5", "RCM_5"])]
    assert labels == ["I", "Blk_5", "RCM_5"]


def test_diagonal_preconditioner():
    M = DiagonalPreconditioner([2.0, 4.0])
    np.testing.assert_allclose(M.apply([2.0, 2.0]), [1.0, 0.5])
    with pytest.raises(ValueError):
        DiagonalPreconditioner([1.0, 0.0])
