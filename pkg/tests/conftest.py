import numpy as np
import pytest

from precselect.sparse import CSRMatrix


def random_sparse_dense(rng, d, nnz):
    """Dense d×d array with exactly ``nnz`` non-zeros at random positions."""
    a = np.zeros((d, d))
    flat = rng.choice(d * d, size=nnz, replace=False)
    a.flat[flat] = rng.standard_normal(nnz)
    return a


def random_spd_dense(rng, d, shift=1.0):
    B = rng.standard_normal((d, d))
    A = B.T @ B / d + shift * np.eye(d)
    return 0.5 * (A + A.T)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def spd30():
    """Fixed random 30×30 SPD matrix."""
    return CSRMatrix.from_dense(random_spd_dense(np.random.default_rng(30), 30))


@pytest.fixture(scope="session")
def spd40():
    return CSRMatrix.from_dense(random_spd_dense(np.random.default_rng(40), 40))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
