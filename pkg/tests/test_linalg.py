import math
import warnings

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from matrixinfo.errors import DimensionMismatch, InvalidOrder, NotPSD, NotSymmetric, Singular
from matrixinfo.linalg import (
    EmbeddingBatch,
    centered_cross_cov,
    centering_matrix,
    check_symmetric,
    is_psd,
    jacobi_eigh,
    logdet_spd,
    matrix_exp_series,
    matrix_log_spectral,
    matrix_log_taylor,
    normalize_columns,
    sym_eig,
    symmetrize,
)


def spd_with_spectrum(rng, w):
    q, _ = np.linalg.qr(rng.standard_normal((len(w), len(w))))
    return symmetrize((q * np.asarray(w)) @ q.T)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
def test_sym_eig_examples(method):
    w, V = sym_eig(np.eye(2), method=method)
    assert np.allclose(w, [1, 1])
    assert np.allclose(V.T @ V, np.eye(2))
    w, _ = sym_eig(np.array([[1, 0.96], [0.96, 1]]), method=method)
    assert np.allclose(w, [1.96, 0.04], atol=1e-14)
    w, _ = sym_eig(np.array([[1.36, 0.48], [0.48, 0.64]]), method=method)
    assert np.allclose(w, [1.6, 0.4], atol=1e-14)


@pytest.mark.parametrize("method", ["lapack", "jacobi"])
@pytest.mark.parametrize("n", [1, 2, 5, 12])
def test_spectrum_invariants(method, n):
    rng = np.random.default_rng(n)
    A = symmetrize(rng.standard_normal((n, n)))
    spec = sym_eig(A, method=method)
    w, V = spec
    assert np.all(np.diff(w) <= 0)
    assert np.max(np.abs(V.T @ V - np.eye(n))) <= 1e-8
    assert np.max(np.abs(spec.reconstruct() - A)) <= 1e-8 * max(1.0, np.abs(A).max())
    assert np.allclose(w, np.sort(scipy.linalg.eigh(A, eigvals_only=True))[::-1], atol=1e-12)


def test_jacobi_matches_lapack_on_clustered_spectrum():
    rng = np.random.default_rng(3)
    A = spd_with_spectrum(rng, [2.0, 2.0, 2.0 + 1e-9, 0.5, 1e-6])
    w, V = jacobi_eigh(A)
    assert np.allclose(np.sort(w), np.linalg.eigvalsh(A), atol=1e-13)
    assert np.allclose(A @ V, V * w, atol=1e-12)


def test_psd_round_off_is_clamped():
    v = np.array([1.0, 1.0]) / math.sqrt(2)
    A = np.outer(v, v)
    A[1, 1] -= 1e-12
    A[0, 0] -= 1e-12
    w = sym_eig(A).eigenvalues
    assert w[-1] >= 0.0


def test_symmetry_tolerance():
    A = np.array([[1.0, 2.0], [2.0 + 1e-12, 1.0]])
    check_symmetric(A)
    with pytest.raises(NotSymmetric):
        sym_eig(np.array([[1.0, 2.0], [2.1, 1.0]]))
    with pytest.raises(DimensionMismatch):
        check_symmetric(np.ones((2, 3)))


def test_matrix_log_spectral_examples():
    assert np.allclose(matrix_log_spectral(np.eye(3)), 0)
    assert np.allclose(matrix_log_spectral(np.diag([math.e, 1.0])), np.diag([1.0, 0.0]))
    assert np.array_equal(matrix_log_spectral(np.diag([1.0, 0.0])), np.zeros((2, 2)))
    with pytest.raises(NotPSD):
        matrix_log_spectral(np.diag([1.0, -0.1]))


def test_matrix_log_spectral_matches_scipy():
    rng = np.random.default_rng(0)
    A = spd_with_spectrum(rng, [3.0, 1.0, 0.2, 0.05])
    assert np.allclose(matrix_log_spectral(A), scipy.linalg.logm(A).real, atol=1e-12)


def test_matrix_log_spectral_floor():
    A = np.diag([1.0, 1e-13])
    assert matrix_log_spectral(A)[1, 1] == 0.0
    assert matrix_log_spectral(A, floor=1e-14)[1, 1] == pytest.approx(math.log(1e-13))


def test_matrix_log_taylor_examples():
    assert np.array_equal(matrix_log_taylor(np.eye(3), 7), np.zeros((3, 3)))
    A = np.diag([1.5, 0.5])
    assert np.max(np.abs(matrix_log_taylor(A, 20) - matrix_log_spectral(A))) <= 1e-5
    scalar = matrix_log_taylor(np.array([[1.1]]), 4)[0, 0]
    assert scalar == pytest.approx(0.1 - 0.005 + 0.001 / 3 - 0.000025, abs=1e-15)
    assert scalar == pytest.approx(0.09530833333333333, abs=1e-15)


def test_matrix_log_taylor_order_errors():
    for order in (0, -1, 2.5):
        with pytest.raises(InvalidOrder):
            matrix_log_taylor(np.eye(2), order)


def test_matrix_log_taylor_non_symmetric_matches_scipy():
    rng = np.random.default_rng(1)
    A = np.eye(3) + 0.2 * rng.standard_normal((3, 3))
    assert np.allclose(matrix_log_taylor(A, 60), scipy.linalg.logm(A).real, atol=1e-10)


def test_matrix_log_taylor_region_warning():
    with pytest.warns(RuntimeWarning):
        matrix_log_taylor(np.diag([2.5, 1.0]), 4, check=True)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        matrix_log_taylor(np.diag([1.5, 0.6]), 4, check=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_taylor_agrees_with_spectral_in_convergent_region(n, seed):
    # order 40 reaches 1e-6 only for eigenvalues roughly inside [0.3, 1.7]
    rng = np.random.default_rng(seed)
    A = spd_with_spectrum(rng, rng.uniform(0.3, 1.7, n))
    assert np.max(np.abs(matrix_log_taylor(A, 40) - matrix_log_spectral(A))) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_exp_of_taylor_log_reconstructs(n, seed):
    rng = np.random.default_rng(seed)
    A = spd_with_spectrum(rng, rng.uniform(0.3, 1.7, n))
    assert np.max(np.abs(matrix_exp_series(matrix_log_taylor(A, 40), 40) - A)) <= 1e-6


def test_matrix_exp_series_matches_scipy():
    rng = np.random.default_rng(2)
    X = 0.5 * rng.standard_normal((4, 4))
    assert np.allclose(matrix_exp_series(X, 40), scipy.linalg.expm(X), atol=1e-13)


def test_centered_cross_cov_examples():
    assert np.allclose(centered_cross_cov(np.eye(2), np.eye(2)), [[0.25, -0.25], [-0.25, 0.25]])
    Z = np.array([[1.0, 1.0], [2.0, 2.0]])
    assert np.allclose(centered_cross_cov(Z, Z), 0)
    with pytest.raises(DimensionMismatch):
        centered_cross_cov(np.ones((2, 3)), np.ones((3, 3)))
    with pytest.raises(DimensionMismatch):
        centered_cross_cov(np.ones((2, 1)), np.ones((2, 1)))


def test_centered_cross_cov_brute_force():
    rng = np.random.default_rng(5)
    d, B = 3, 7
    Z1, Z2 = rng.standard_normal((d, B)), rng.standard_normal((d, B))
    m1, m2 = Z1.mean(axis=1), Z2.mean(axis=1)
    oracle = sum(np.outer(Z1[:, i] - m1, Z2[:, i] - m2) for i in range(B)) / B
    assert np.allclose(centered_cross_cov(Z1, Z2), oracle, atol=1e-12)
    H = centering_matrix(B)
    assert np.allclose(centered_cross_cov(Z1, Z2), Z1 @ H @ Z2.T / B, atol=1e-12)
    assert np.allclose(centered_cross_cov(Z1, Z2, centering=False), Z1 @ Z2.T / B)


def test_centered_cross_cov_transpose_and_psd():
    rng = np.random.default_rng(6)
    Z1, Z2 = rng.standard_normal((4, 9)), rng.standard_normal((4, 9))
    assert np.max(np.abs(centered_cross_cov(Z1, Z2).T - centered_cross_cov(Z2, Z1))) <= 1e-12
    assert is_psd(symmetrize(centered_cross_cov(Z1, Z1)))


@pytest.mark.parametrize("B", [2, 5, 16])
def test_centering_matrix_idempotent(B):
    H = centering_matrix(B)
    assert np.max(np.abs(H @ H - H)) <= 1e-12
    assert np.array_equal(H, H.T)


def test_sym_eig_permutation_invariance():
    rng = np.random.default_rng(8)
    A = symmetrize(rng.standard_normal((6, 6)))
    perm = rng.permutation(6)
    w1 = sym_eig(A).eigenvalues
    w2 = sym_eig(A[np.ix_(perm, perm)]).eigenvalues
    assert np.allclose(w1, w2, atol=1e-13)


def test_is_psd():
    rng = np.random.default_rng(9)
    Z = rng.standard_normal((4, 3))
    assert is_psd(symmetrize(Z @ Z.T))
    assert not is_psd(np.diag([1.0, -1.0]))
    assert is_psd(np.zeros((3, 3)))


def test_logdet_spd():
    assert logdet_spd(np.eye(4)) == 0.0
    assert logdet_spd(np.array([[1, 0.96], [0.96, 1]])) == pytest.approx(math.log(0.0784), abs=1e-12)
    assert logdet_spd(np.diag([2.0, 2.0])) == pytest.approx(2 * math.log(2), abs=1e-15)
    rng = np.random.default_rng(10)
    A = spd_with_spectrum(rng, [0.3, 1.2, 4.0])
    assert logdet_spd(A) == pytest.approx(np.trace(matrix_log_spectral(A)), abs=1e-10)
    with pytest.raises(Singular):
        logdet_spd(np.diag([1.0, 0.0]))


def test_embedding_batch():
    Z = normalize_columns(np.random.default_rng(0).standard_normal((3, 5)))
    batch = EmbeddingBatch(Z, unit_norm=True)
    assert (batch.d, batch.B) == (3, 5)
    assert np.array_equal(np.asarray(batch), Z)
    with pytest.raises(ValueError):
        EmbeddingBatch(2 * Z, unit_norm=True)
    with pytest.raises(DimensionMismatch):
        EmbeddingBatch(np.zeros((0, 3)))
    assert EmbeddingBatch.normalized(2 * Z).unit_norm
