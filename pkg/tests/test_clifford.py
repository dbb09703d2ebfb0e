import numpy as np
import pytest
from numpy.testing import assert_allclose

from spinsurf.clifford import (
    BETA,
    GAMMA,
    IDENTITY,
    PAULI,
    SIGMA,
    SIGMA3,
    anticommutator,
    even_odd_split,
    gamma,
    grading,
    reduced_gamma,
    unit_reduced_gamma,
)
from spinsurf.geometry import frame_at


@pytest.mark.parametrize("i", range(3))
@pytest.mark.parametrize("j", range(3))
def test_flat_gammas_anticommute(i, j):
    expected = -2.0 * IDENTITY if i == j else np.zeros((4, 4))
    assert_allclose(anticommutator(GAMMA[i], GAMMA[j]), expected, atol=1e-15)


@pytest.mark.parametrize("i", range(3))
def test_beta_gamma_is_hermitian_and_odd(i):
    product = BETA @ GAMMA[i]
    assert_allclose(product, product.conj().T, atol=1e-15)
    assert_allclose(anticommutator(BETA, GAMMA[i]), np.zeros((4, 4)), atol=1e-15)


def test_spin_matrices():
    assert_allclose(SIGMA3, 1j * GAMMA[0] @ GAMMA[1], atol=1e-15)
    assert_allclose(GAMMA[2] @ GAMMA[1] @ SIGMA3, SIGMA[1], atol=1e-15)
    assert sorted(np.linalg.eigvalsh(SIGMA3).round(12)) == [-1, -1, 1, 1]


def test_spinor_matrix_operations():
    product = gamma(1) @ gamma(1)
    assert_allclose(product.entries, -IDENTITY)
    assert product.tag == "gamma1*gamma1"
    assert_allclose((gamma(3) @ gamma(2)).entries, np.kron(np.eye(2), 1j * PAULI[0]), atol=1e-15)


def test_reduced_gammas_follow_inverse_metric(torus_chart):
    frame = frame_at(torus_chart, (0.6, 1.0))
    for a in range(2):
        for b in range(2):
            lhs = anticommutator(reduced_gamma(frame, a).entries, reduced_gamma(frame, b).entries)
            assert_allclose(lhs, -2.0 * frame.g_inv[a, b] * IDENTITY, atol=1e-12)


def test_unit_gammas_on_torus(torus_chart):
    frame = frame_at(torus_chart, (0.6, 1.0))
    assert_allclose(unit_reduced_gamma(frame, 0).entries, GAMMA[0], atol=1e-12)
    assert_allclose(unit_reduced_gamma(frame, 1).entries, GAMMA[1], atol=1e-12)


def test_even_odd_split_is_exact():
    rng = np.random.default_rng(7)
    m = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
    even, odd = even_odd_split(m)
    b = grading(8)
    assert_allclose(even + odd, m, atol=1e-15)
    assert_allclose(b @ odd + odd @ b, np.zeros((8, 8)), atol=1e-14)
    assert_allclose(b @ even - even @ b, np.zeros((8, 8)), atol=1e-14)


def test_grading_squares_to_identity():
    b = grading(12)
    assert_allclose(b @ b, np.eye(12))
    with pytest.raises(ValueError):
        grading(6)
