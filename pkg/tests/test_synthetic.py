import numpy as np
import pytest

from precselect.stability import exact_stability
from precselect.synthetic import (
    blob_dataset,
    block_structured_spd,
    clear_winner_family,
    distinct_eigenvalue_matrix,
    random_spd,
    tridiagonal_spd,
)


@pytest.mark.parametrize("seed", range(5))
def test_clear_winner_targets_are_exact(seed):
    A, cands, targets = clear_winner_family(d=40, n=6, winner=2, rng=seed)
    exact = [exact_stability(A, M) for M in cands]
    np.testing.assert_allclose(exact, targets, rtol=1e-12)
    assert int(np.argmin(targets)) == 2
    assert sorted(targets)[1] >= 3 * targets[2]
    for M in cands:
        assert np.all(np.diag(M.to_dense()) > 0)


@pytest.mark.parametrize("make", [
    lambda g: random_spd(30, g),
    lambda g: random_spd(30, g, density=0.2),
    lambda g: tridiagonal_spd(30, g),
    lambda g: block_structured_spd(60, 7, g),
    lambda g: block_structured_spd(60, 7, g, shuffle=True),
])
def test_generated_matrices_are_spd(make):
    a = make(np.random.default_rng(0)).toarray()
    assert np.array_equal(a, a.T)
    assert np.linalg.eigvalsh(a)[0] > 0


def test_distinct_eigenvalues():
    a = distinct_eigenvalue_matrix(12, (2.0, 5.0, 9.0), 0)
    np.testing.assert_allclose(np.unique(np.round(np.linalg.eigvalsh(a), 8)), [2.0, 5.0, 9.0])


def test_blob_dataset_shape():
    ds = blob_dataset(50, dim=3, n_blobs=4, rng=1)
    assert ds.points.shape == (50, 3) and ds.targets.shape == (50,)
