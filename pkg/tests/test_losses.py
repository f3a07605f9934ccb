import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from matrixinfo.errors import DimensionMismatch, EmbeddingMismatch, InvalidDistribution, InvalidOrder
from matrixinfo.linalg import centering_matrix, normalize_columns, symmetrize
from matrixinfo.losses import (
    LossConfig,
    TokenStep,
    alignment_loss,
    alignment_terms,
    evaluate_loss,
    loss_decomposition,
    matrix_llm_loss,
    matrix_ssl_kl_loss,
    matrix_ssl_loss,
    mec_loss,
    mec_loss_check,
    mse_alignment,
    tcr_loss,
    uniformity_loss,
)
from matrixinfo.matinfo import matrix_entropy, mce

I2 = np.eye(2)


def views(seed, d=4, B=8, noise=0.3):
    rng = np.random.default_rng(seed)
    Z1 = normalize_columns(rng.standard_normal((d, B)))
    Z2 = normalize_columns(Z1 + noise * rng.standard_normal((d, B)))
    return Z1, Z2


def logm(A):
    return scipy.linalg.logm(A).real


def test_loss_config_validation():
    with pytest.raises(ValueError):
        LossConfig(eps_sq=0)
    with pytest.raises(InvalidOrder):
        LossConfig(taylor_order=0)
    with pytest.raises(ValueError):
        LossConfig(gamma=-1)
    with pytest.raises(ValueError):
        LossConfig(log="pade")
    cfg = LossConfig()
    assert (cfg.eps_sq, cfg.mu, cfg.lambda_reg, cfg.gamma, cfg.taylor_order) == (0.5, 1.0, 1e-3, 1.0, 4)
    assert cfg.stop_grad_branch1


def test_tcr_examples():
    cfg = LossConfig(eps_sq=1.0)
    assert tcr_loss(I2, cfg) == pytest.approx(-math.log(2), abs=1e-15)
    Z = np.array([[1.0, 1.0], [0.0, 0.0]])
    assert tcr_loss(Z, cfg) == pytest.approx(-0.5 * math.log(3), abs=1e-15)
    assert tcr_loss(np.zeros((3, 4)), cfg) == 0.0


def test_tcr_matches_logdet_oracle():
    rng = np.random.default_rng(0)
    Z = rng.standard_normal((5, 9))
    c = 5 / (9 * 0.5)
    _, logdet = np.linalg.slogdet(np.eye(5) + c * Z @ Z.T)
    assert tcr_loss(Z) == pytest.approx(-0.5 * logdet, abs=1e-12)


def test_mec_examples():
    cfg = LossConfig(eps_sq=1.0, taylor_order=20001)
    # the series sits on the boundary (eigenvalue 2); convergence is slow but certain
    assert mec_loss(I2, I2, cfg) == pytest.approx(-math.log(4), abs=1e-4)
    assert mec_loss_check(I2, I2, cfg)["logdet"] == pytest.approx(-math.log(4), abs=1e-15)
    assert mec_loss(np.zeros((2, 3)), np.zeros((2, 3))) == 0.0
    one = np.array([[1.0]])
    assert mec_loss(one, one, LossConfig(eps_sq=1.0, taylor_order=4)) == pytest.approx(-7 / 12, abs=1e-15)
    assert -7 / 12 == pytest.approx(-0.58333, abs=1e-5)
    with pytest.raises(DimensionMismatch):
        mec_loss(np.ones((2, 3)), np.ones((2, 4)))


def test_mec_trace_equals_logdet_in_convergent_region():
    Z1, Z2 = views(1, d=3, B=12)
    cfg = LossConfig(eps_sq=4.0, taylor_order=80)
    c = 3 / (12 * 4.0)
    assert max(abs(np.linalg.eigvals(c * Z1 @ Z2.T))) < 1
    _, logdet = np.linalg.slogdet(np.eye(3) + c * Z1 @ Z2.T)
    assert abs(mec_loss(Z1, Z2, cfg) + logdet) <= 1e-6


def test_uniformity_exact_example():
    cfg = LossConfig(lambda_reg=0.1, log="exact")
    expected = -0.5 * (math.log(0.6) + math.log(0.1)) + 0.7
    assert uniformity_loss(I2, I2, cfg) == pytest.approx(expected, abs=1e-14)
    assert uniformity_loss(I2, I2, cfg) == pytest.approx(2.106705, abs=1e-6)


def test_uniformity_minimizer():
    # C + lambda I = I / d exactly: columns +-e_i, centered covariance (1/d - lambda) I
    d, lam = 2, 0.1
    Z = np.sqrt(2 * (1 / d - lam)) * np.array([[1.0, -1.0, 0.0, 0.0], [0.0, 0.0, 1.0, -1.0]])
    cfg = LossConfig(lambda_reg=lam, log="exact")
    M = symmetrize(Z @ centering_matrix(4) @ Z.T / 4) + lam * np.eye(d)
    assert np.allclose(M, np.eye(d) / d)
    best = uniformity_loss(Z, Z, cfg)
    rng = np.random.default_rng(2)
    for _ in range(20):
        w = rng.uniform(0.05, 0.95)
        q, _ = np.linalg.qr(rng.standard_normal((d, d)))
        Q = q @ np.diag([w, 1 - w]) @ q.T
        assert mce(np.eye(d) / d, Q) >= best - 1e-12


def test_uniformity_taylor_against_logdet_oracle():
    Z1, Z2 = views(3, d=4, B=64)
    cfg = LossConfig(taylor_order=40, lambda_reg=0.05)
    M = Z1 @ centering_matrix(64) @ Z2.T / 64 + 0.05 * np.eye(4)
    sign, logdet = np.linalg.slogdet(M)
    assert sign > 0
    assert abs(uniformity_loss(Z1, Z2, cfg) - (-logdet / 4 + np.trace(M))) <= 1e-6


def test_uniformity_taylor_matches_spectral_on_symmetric_covariance():
    Z, _ = views(4, d=4, B=64)
    cfg = LossConfig(taylor_order=40, lambda_reg=0.05)
    exact = uniformity_loss(Z, Z, LossConfig(lambda_reg=0.05, log="exact"))
    assert abs(uniformity_loss(Z, Z, cfg) - exact) <= 1e-6
    M = symmetrize(Z @ centering_matrix(64) @ Z.T / 64) + 0.05 * np.eye(4)
    assert exact == pytest.approx(-np.trace(logm(M)) / 4 + np.trace(M), abs=1e-12)


def test_uniformity_swap_symmetry_of_taylor_value():
    Z1, Z2 = views(5, d=4, B=16)
    for order in (4, 40):
        cfg = LossConfig(taylor_order=order)
        assert uniformity_loss(Z1, Z2, cfg) == pytest.approx(uniformity_loss(Z2, Z1, cfg), abs=1e-12)


def test_uniformity_non_positive_scale_is_infinite():
    Z1 = np.array([[1.0, -1.0], [0.0, 0.0]])
    assert uniformity_loss(Z1, -Z1, LossConfig(lambda_reg=0.0)) == math.inf


def test_alignment_examples():
    Z, _ = views(6)
    cfg = LossConfig()
    trace_term, mce_term = alignment_terms(Z, Z, cfg)
    P = symmetrize(Z @ centering_matrix(8) @ Z.T / 8) + 1e-3 * np.eye(4)
    assert mce_term == pytest.approx(matrix_entropy(P), abs=1e-12)
    cfg = LossConfig(lambda_reg=0.1)
    expected = -0.5 + (0.6 - 0.6 * math.log(0.6) + 0.1 - 0.1 * math.log(0.1))
    assert alignment_loss(I2, I2, cfg) == pytest.approx(expected, abs=1e-14)
    assert alignment_loss(I2, I2, cfg) == pytest.approx(0.73676, abs=1e-5)


def test_alignment_uncentered_example_values():
    cfg = LossConfig(lambda_reg=0.0, centering=False)
    cases = [
        (np.eye(2), np.array([[0.8, 0.6], [0.6, 0.8]]), 2.55),
        (np.array([[1.0, 0.6], [0.0, 0.8]]), np.array([[0.8, 0.0], [0.6, 1.0]]), 0.60),
    ]
    for Z1, Z2, target in cases:
        _, mce_term = alignment_terms(Z1, Z2, cfg)
        value = 2 * (mce_term - matrix_entropy(Z1 @ Z1.T / 2))
        assert value == pytest.approx(target, abs=0.01)
        assert mse_alignment(Z1, Z2) == pytest.approx(0.8, abs=1e-12)


def test_alignment_is_not_symmetric():
    Z1, Z2 = views(7)
    assert abs(alignment_loss(Z1, Z2) - alignment_loss(Z2, Z1)) > 1e-6


def ssl_oracle(Z1, Z2, lam, gamma):
    d, B = Z1.shape
    H = centering_matrix(B)
    C12 = Z1 @ H @ Z2.T / B + lam * np.eye(d)
    C11 = symmetrize(Z1 @ H @ Z1.T / B) + lam * np.eye(d)
    C22 = symmetrize(Z2 @ H @ Z2.T / B) + lam * np.eye(d)
    uniform = -np.trace(logm(symmetrize(C12))) / d + np.trace(C12)
    align = -np.trace(Z1 @ H @ Z2.T / B) + gamma * (-np.trace(C11 @ logm(C22)) + np.trace(C22))
    return uniform + align


def test_matrix_ssl_against_straight_line_oracle():
    Z1, Z2 = views(8, d=4, B=8)
    cfg = LossConfig(lambda_reg=0.05, log="exact", gamma=0.7)
    assert abs(matrix_ssl_loss(Z1, Z2, cfg) - ssl_oracle(Z1, Z2, 0.05, 0.7)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["taylor", "exact"]))
def test_matrix_ssl_decomposition(seed, log):
    Z1, Z2 = views(seed)
    cfg = LossConfig(log=log, lambda_reg=0.05)
    total = matrix_ssl_loss(Z1, Z2, cfg)
    assert abs(total - uniformity_loss(Z1, Z2, cfg) - alignment_loss(Z1, Z2, cfg)) <= 1e-12
    cfg0 = LossConfig(log=log, lambda_reg=0.05, gamma=0.0)
    trace_term, _ = alignment_terms(Z1, Z2, cfg0)
    assert abs(matrix_ssl_loss(Z1, Z2, cfg0) - uniformity_loss(Z1, Z2, cfg0) - trace_term) <= 1e-12


def test_matrix_ssl_kl_difference_depends_only_on_z1():
    Z1, Z2 = views(9)
    _, Z2b = views(10)
    cfg = LossConfig(lambda_reg=0.05)
    gap_a = matrix_ssl_kl_loss(Z1, Z2, cfg) - matrix_ssl_loss(Z1, Z2, cfg)
    gap_b = matrix_ssl_kl_loss(Z1, Z2b, cfg) - matrix_ssl_loss(Z1, Z2b, cfg)
    assert abs(gap_a - gap_b) <= 1e-9
    P = symmetrize(Z1 @ centering_matrix(8) @ Z1.T / 8) + 0.05 * np.eye(4)
    assert gap_a == pytest.approx(-(math.log(4) + 1) - matrix_entropy(P), abs=1e-10)


def test_matrix_ssl_kl_identity_views():
    cfg = LossConfig(lambda_reg=0.1)
    value = matrix_ssl_kl_loss(I2, I2, cfg)
    assert math.isfinite(value)
    assert loss_decomposition("matrix-ssl-kl", I2, I2, cfg)["mkl_alignment_term"] == pytest.approx(0.0, abs=1e-14)


def test_evaluate_loss_dispatch():
    Z1, Z2 = views(11)
    assert evaluate_loss("tcr", Z1, Z2) == tcr_loss(Z2)
    with pytest.raises(ValueError):
        evaluate_loss("infonce", Z1, Z2)
    parts = loss_decomposition("matrix-ssl", Z1, Z2)
    assert parts["value"] == pytest.approx(
        parts["uniformity_term"] + parts["trace_term"] + parts["mce_alignment_term"], abs=1e-12)


def test_matrix_llm_examples():
    step = TokenStep(np.array([1.0, 0.0]), np.array([0.5, 0.5]), I2)
    assert matrix_llm_loss([step]) == pytest.approx(2 * math.log(2) + 1, abs=1e-15)
    assert matrix_llm_loss([step]) == pytest.approx(2.38629, abs=1e-5)
    onehot = TokenStep(np.array([1.0, 0.0]), np.array([1.0, 0.0]), I2)
    assert matrix_llm_loss([onehot]) == pytest.approx(1.0, abs=1e-15)


def test_matrix_llm_orthonormal_embeddings_reduce_to_shannon():
    rng = np.random.default_rng(12)
    E, _ = np.linalg.qr(rng.standard_normal((5, 5)))
    p = rng.dirichlet(np.ones(5))
    step = TokenStep(p, p, E)
    P, _ = step.matrices()
    assert mce(P, P) == pytest.approx(-np.sum(p * np.log(p)) + 1, abs=1e-12)
    assert matrix_llm_loss([step, step]) == pytest.approx(2 * (2 * -np.sum(p * np.log(p)) + 1), abs=1e-11)


def test_matrix_llm_sentinels_and_errors():
    step = TokenStep(np.array([0.5, 0.5]), np.array([1.0, 0.0]), I2)
    assert matrix_llm_loss([step]) == math.inf
    E2 = normalize_columns(np.array([[1.0, 1.0], [0.0, 1.0]]))
    other = TokenStep(np.array([0.5, 0.5]), np.array([0.5, 0.5]), E2)
    with pytest.raises(EmbeddingMismatch):
        matrix_llm_loss([TokenStep(np.array([0.5, 0.5]), np.array([0.5, 0.5]), I2), other])
    with pytest.raises(InvalidDistribution):
        TokenStep(np.array([0.5, 0.6]), np.array([0.5, 0.5]), I2)
    with pytest.raises(InvalidDistribution):
        TokenStep(np.array([0.5, 0.5]), np.array([0.5, 0.5]), 2 * I2)
    assert matrix_llm_loss([]) == 0.0
