import numpy as np
import pytest

from sketchgossip.errors import InconsistentSystemError, InvalidInputError
from sketchgossip.linalg import SpdMatrix, pseudoinverse
from sketchgossip.system import LinearSystem, project_onto_solution_set

from conftest import gaussian, random_spd


def kkt_projection(A, b, Bm, x):
    """argmin ||z - x||_B s.t. Az = b via the KKT system (independent of the library)."""
    m, n = A.shape
    K = np.block([[Bm, A.T], [A, np.zeros((m, m))]])
    rhs = np.concatenate([Bm @ x, b])
    sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
    return sol[:n]


def test_inconsistent_rejected():
    with pytest.raises(InconsistentSystemError) as info:
        LinearSystem(np.array([[1.0], [1.0]]), np.array([0.0, 1.0]))
    assert info.value.residual > 0.5


def test_shape_and_finiteness_errors():
    with pytest.raises(InvalidInputError):
        LinearSystem(np.ones((2, 2)), np.ones(3))
    with pytest.raises(InvalidInputError):
        LinearSystem(np.array([[np.inf, 1.0]]), np.ones(1))
    with pytest.raises(InvalidInputError):
        LinearSystem(np.ones((2, 2)), np.ones(2), SpdMatrix.identity(3))


def test_input_arrays_not_frozen():
    A = np.eye(2)
    LinearSystem(A, np.ones(2))
    A[0, 0] = 2.0


def test_projection_fixes_solutions(small_system):
    z = np.linalg.lstsq(small_system.A, small_system.b, rcond=None)[0]
    assert np.allclose(small_system.project(z), z, atol=1e-10)


def test_projection_pairwise_average():
    s = LinearSystem(np.array([[1.0, -1.0]]), np.zeros(1))
    assert np.allclose(s.project(np.array([1.0, 5.0])), [3.0, 3.0])


@pytest.mark.parametrize("seed", range(5))
def test_projection_matches_kkt(seed):
    rng = np.random.default_rng(seed)
    s = gaussian(4, 6, seed, B=random_spd(6, seed + 50))
    x = rng.standard_normal(6)
    assert np.allclose(project_onto_solution_set(s, x),
                       kkt_projection(s.A, s.b, s.B.to_dense(), x), atol=1e-9)


def test_projection_rank_deficient(deficient_system):
    s = deficient_system
    x = np.random.default_rng(1).standard_normal(s.n)
    p = s.project(x)
    assert np.allclose(s.A @ p, s.b, atol=1e-8)
    assert np.allclose(p, x - pseudoinverse(s.A) @ (s.A @ x - s.b), atol=1e-8)


def test_rows_sparse_data():
    A = np.array([[0.0, 2.0, 0.0], [1.0, 0.0, -1.0]])
    s = LinearSystem(A, A @ np.ones(3), SpdMatrix.diagonal([1.0, 2.0, 4.0]))
    cols, vals, dcols, dvals, norm2 = s.rows()[1]
    assert list(cols) == [0, 2] and list(vals) == [1.0, -1.0]
    assert np.allclose(dvals, [1.0, -0.25]) and norm2 == pytest.approx(1.25)
    assert np.allclose(s.row_norms_sq(), [2.0, 1.25])


def test_normalized_rows():
    s = gaussian(5, 3, 2).normalized()
    assert np.allclose(np.linalg.norm(s.A, axis=1), 1.0)
    with pytest.raises(InvalidInputError):
        LinearSystem(np.array([[0.0, 0.0], [1.0, 0.0]]), np.zeros(2)).normalized()
