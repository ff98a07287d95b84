import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from qmcr import densela as la
from qmcr import random_ops as ro
from qmcr.errors import BranchCut, DimensionMismatch, SingularMatrix

seeds = st.integers(0, 2**32 - 1)


def test_kron_identity_and_diagonal():
    assert np.array_equal(la.kron(np.eye(2), np.eye(2)), np.eye(4))
    assert np.allclose(la.kron(np.diag([2, 3]), np.eye(2)), np.diag([2, 2, 3, 3]))


def test_kron_entry_layout():
    rng = np.random.default_rng(0)
    a, b = ro.ginibre(rng, 2, 3), ro.ginibre(rng, 3, 2)
    k = la.kron(a, b)
    for i in range(2):
        for j in range(3):
            for r in range(3):
                for c in range(2):
                    assert np.isclose(k[i * 3 + r, j * 2 + c], a[i, j] * b[r, c], rtol=1e-15, atol=0)


@given(seeds)
def test_vec_of_triple_product(seed):
    rng = np.random.default_rng(seed)
    a, x, b = (ro.ginibre(rng, 2, 2) for _ in range(3))
    assert np.allclose(la.vec(a @ x @ b.T), la.kron(a, b) @ la.vec(x), atol=1e-12)


@given(seeds)
def test_kron_associative_and_mixed_product(seed):
    rng = np.random.default_rng(seed)
    a, b, c, d = (ro.ginibre(rng, 2, 2) for _ in range(4))
    assert np.allclose(la.kron(la.kron(a, b), c), la.kron(a, la.kron(b, c)), atol=1e-12)
    assert np.allclose(la.kron(a, b) @ la.kron(c, d), la.kron(a @ c, b @ d), atol=1e-12)


def test_vec_is_row_stacking():
    m = np.array([[1, 2], [3, 4]])
    assert np.array_equal(la.vec(m), [1, 2, 3, 4])
    assert np.array_equal(la.vec(np.zeros((2, 2))), np.zeros(4))
    r = ro.ginibre(np.random.default_rng(1), 3, 3)
    assert np.array_equal(la.unvec(la.vec(r), 3, 3), r)


def test_unvec_length_mismatch():
    with pytest.raises((DimensionMismatch, ValueError)):
        la.unvec(np.zeros(5), 2, 2)


def test_solve_examples():
    b = ro.ginibre(np.random.default_rng(2), 3, 2)
    assert np.allclose(la.solve(np.eye(3), b), b)
    assert np.allclose(la.solve(np.diag([2.0, 4.0]), np.array([[2.0], [4.0]])), [[1.0], [1.0]])


@given(seeds)
def test_solve_round_trip(seed):
    rng = np.random.default_rng(seed)
    a = ro.ginibre(rng, 5, 5) + 3 * np.eye(5)
    x0 = ro.ginibre(rng, 5, 2)
    x, info = la.solve(a, a @ x0, return_info=True)
    assert np.linalg.norm(x - x0) <= 1e-10 * np.linalg.norm(x0)
    assert info.residual <= 1e-12
    assert info.condition >= 1


def test_solve_singular():
    with pytest.raises(SingularMatrix):
        la.solve(np.array([[1.0, 2.0], [2.0, 4.0]]), np.ones(2))


def test_eig_examples():
    w, v = la.eig(np.diag([1.0, 0.5]))
    assert sorted(w.real) == [0.5, 1.0]
    assert np.allclose(np.abs(v), np.eye(2))
    rng = np.random.default_rng(3)
    p = rng.uniform(size=(4, 4))
    p /= p.sum(axis=0)
    w, _ = la.eig(p)
    assert np.min(np.abs(w - 1)) < 1e-12


@given(seeds)
def test_eig_residuals(seed):
    a = ro.ginibre(np.random.default_rng(seed), 6, 6)
    w, v = la.eig(a)
    assert np.all(np.linalg.norm(a @ v - v * w, axis=0) <= 1e-10 * np.linalg.norm(a, 2))


def test_principal_sqrt_examples():
    assert np.allclose(la.principal_sqrt(np.eye(4)), np.eye(4))
    assert np.allclose(la.principal_sqrt(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]))


def test_principal_sqrt_branch_cut():
    with pytest.raises(BranchCut):
        la.principal_sqrt(np.diag([1.0, -1.0]))
    with pytest.raises(BranchCut):
        la.principal_sqrt(np.array([[0, 1], [1, 0]]) * 1.0 - 2 * np.eye(2))


@settings(max_examples=200)
@given(seeds, st.integers(2, 6))
def test_principal_sqrt_of_square(seed, n):
    rng = np.random.default_rng(seed)
    # spectrum in the right half-plane
    u = ro.ginibre(rng, n, n) + 2 * np.eye(n)
    w = np.abs(rng.standard_normal(n)) + 0.1 + 1j * rng.standard_normal(n)
    s = u @ np.diag(w) @ np.linalg.inv(u)
    got = la.principal_sqrt(s @ s)
    assert np.linalg.norm(got - s) <= 1e-8 * max(1.0, np.linalg.norm(s))


@settings(max_examples=1000, deadline=None)
@given(seeds, st.integers(1, 6))
def test_principal_sqrt_squares_back(seed, n):
    rng = np.random.default_rng(seed)
    m = ro.ginibre(rng, n, n) + 2 * n * np.eye(n)
    s = la.principal_sqrt(m)
    assert np.linalg.norm(s @ s - m) <= 1e-10 * np.linalg.norm(m)
    assert np.all(np.linalg.eigvals(s).real > 0)
    assert np.allclose(s, sla.sqrtm(m), atol=1e-9 * np.linalg.norm(m))


def test_principal_sqrt_zero_eigenvalue():
    m = np.diag([0.0, 1.0, 4.0]).astype(complex)
    assert np.allclose(la.principal_sqrt(m), np.diag([0, 1, 2]))


def test_principal_sqrt_defective_uses_iteration():
    m = np.array([[4.0, 1.0], [0.0, 4.0]])
    s = la.principal_sqrt(m)
    assert np.allclose(s @ s, m, atol=1e-12)
    assert np.allclose(s, sla.sqrtm(m))


def test_trace_norm_examples():
    assert la.trace_norm(np.eye(3)) == pytest.approx(3)
    assert la.trace_norm(np.diag([1.0, -2.0])) == pytest.approx(3)
    rho = ro.random_density(np.random.default_rng(4), 4)
    assert abs(la.trace_norm(rho) - 1) <= 1e-12


def test_trace_norm_non_hermitian():
    m = np.array([[0, 1], [0, 0]], dtype=complex)
    assert la.trace_norm(m) == pytest.approx(1)


def test_orthonormal_basis_rank():
    v = np.array([[1, 2], [1, 2], [0, 0]], dtype=complex)
    b = la.orthonormal_basis(v)
    assert b.shape == (3, 1)
    assert np.allclose(la.dagger(b) @ b, np.eye(1))
