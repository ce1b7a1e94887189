import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import random_factored
from w2approx.errors import CapacityError, InvalidInputError
from w2approx.factored import FactoredMatrix


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


def test_zero_vector():
    A = FactoredMatrix.gram(np.ones((2, 4)))
    assert np.array_equal(A.matvec(np.zeros(4)), np.zeros(4))


def test_all_ones_gram_on_basis_vector():
    A = FactoredMatrix.gram([[1.0, 1.0]])
    assert A.matvec([1.0, 0.0]).tolist() == [1.0, 1.0]


def test_symmetric_transpose(rng):
    A = FactoredMatrix(rng.standard_normal((3, 6)), np.full(6, 2.0), np.full(6, 2.0))
    z = rng.standard_normal(6)
    assert np.allclose(A.matvec(z), A.matvec_transpose(z), rtol=1e-14)


def test_pure_rank_one_transpose(rng):
    u, w, z = rng.standard_normal((3, 5))
    A = FactoredMatrix(np.zeros((1, 5)), np.ones(5), np.ones(5), [(u, w)])
    assert np.allclose(A.matvec_transpose(z), w * (u @ z))


def test_row_sums_all_ones():
    A = FactoredMatrix.gram(np.ones((1, 3)))
    assert A.row_sums().tolist() == [3.0, 3.0, 3.0]


def test_identity_scaling_and_linearity(rng):
    A = random_factored(rng, 7, 3, 2)
    assert np.array_equal(A.scale_rows(np.ones(7)).to_dense(), A.to_dense())
    s = rng.uniform(0.5, 2, 7)
    assert np.allclose(A.scale_rows(s).row_sums(), s * A.row_sums(), rtol=1e-12)


def test_rank_one_zero_and_from_zero(rng):
    A = random_factored(rng, 5, 2, 0)
    assert np.array_equal(A.add_rank_one(np.zeros(5), np.ones(5)).to_dense(), A.to_dense())
    u, w = rng.standard_normal((2, 5))
    Z = FactoredMatrix(np.zeros((1, 5)), np.ones(5), np.ones(5)).add_rank_one(u, w)
    assert Z.entry(2, 3) == pytest.approx(u[2] * w[3], rel=1e-15)


def test_entry_of_scaled_ones():
    a, b = np.array([1.0, 2.0, 3.0]), np.array([0.5, 4.0, 1.0])
    A = FactoredMatrix(np.ones((1, 3)), a, b)
    assert all(A.entry(i, j) == a[i] * b[j] for i in range(3) for j in range(3))


def test_zero_factorization_dense():
    assert np.array_equal(FactoredMatrix.gram(np.zeros((2, 4))).to_dense(), np.zeros((4, 4)))


def test_scale_round_trip(rng):
    A = random_factored(rng, 9, 3, 2)
    s = rng.uniform(0.1, 3, 9)
    B = A.scale_rows(s).scale_rows(1 / s).scale_cols(s).scale_cols(1 / s)
    assert np.abs(B.to_dense() - A.to_dense()).max() <= 1e-12 * max(1.0, np.abs(A.to_dense()).max())


def test_errors():
    A = FactoredMatrix.gram(np.ones((1, 3)))
    with pytest.raises(InvalidInputError):
        A.matvec(np.ones(4))
    with pytest.raises(InvalidInputError):
        A.scale_rows([1.0, 0.0, 1.0])
    with pytest.raises(InvalidInputError):
        A.scale_cols([1.0, np.inf, 1.0])
    with pytest.raises(InvalidInputError):
        FactoredMatrix(np.ones(3), np.ones(3), np.ones(3))
    with pytest.raises(IndexError):
        A.entry(0, 3)
    with pytest.raises(CapacityError):
        A.to_dense(cap=2)
    # zero scale entries are only for rounding
    assert A.scale_rows([1.0, 0.0, 1.0], allow_zero=True).row_sums()[1] == 0.0


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 64), st.integers(1, 8), st.integers(0, 3), st.integers(0, 2 ** 32 - 1))
def test_dense_equivalence(n, r, t, seed):
    rng = np.random.default_rng(seed)
    A = random_factored(rng, n, r, t)
    D = A.to_dense()
    z = rng.standard_normal(n)
    s = rng.uniform(0.1, 2, n)
    assert rel(A.matvec(z), D @ z) <= 1e-10
    assert rel(A.matvec_transpose(z), D.T @ z) <= 1e-10
    assert rel(A.row_sums(), D.sum(1)) <= 1e-10
    assert rel(A.col_sums(), D.sum(0)) <= 1e-10
    assert rel(A.scale_rows(s).to_dense(), s[:, None] * D) <= 1e-10
    assert rel(A.scale_cols(s).to_dense(), D * s) <= 1e-10
    u, w = rng.standard_normal((2, n))
    assert rel(A.add_rank_one(u, w).to_dense(), D + np.outer(u, w)) <= 1e-10
    i, j = rng.integers(0, n, 2)
    assert abs(A.entry(i, j) - D[i, j]) <= 1e-10 * max(1.0, np.abs(D).max())
    assert A.total_mass() == pytest.approx(D.sum(), rel=1e-10, abs=1e-10 * np.abs(D).sum())
