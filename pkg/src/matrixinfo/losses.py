"""Self-supervised losses built from matrix information quantities.

Embedding batches are ``d x B`` arrays (one feature vector per column).
Covariances use the centering matrix ``H_B`` unless ``centering`` is off,
and are regularized by ``lambda_reg * I`` where the loss calls for it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, EmbeddingMismatch, InvalidDistribution, InvalidOrder
from .linalg import LOG_FLOOR, centered_cross_cov, matrix_log_taylor, symmetrize, sym_eig
from .matinfo import matrix_entropy, mce, mkl

LOSS_NAMES = ("tcr", "mec", "uniformity", "alignment", "matrix-ssl", "matrix-ssl-kl")


@dataclass(frozen=True)
class LossConfig:
    eps_sq: float = 0.5
    mu: float = 1.0
    lambda_reg: float = 1e-3
    gamma: float = 1.0
    taylor_order: int = 4
    stop_grad_branch1: bool = True
    log: str = "taylor"  # log route for the cross-covariance: "taylor" | "exact"
    centering: bool = True

    def __post_init__(self):
        if not self.eps_sq > 0:
            raise ValueError(f"eps_sq must be positive, got {self.eps_sq}")
        if not self.mu > 0:
            raise ValueError(f"mu must be positive, got {self.mu}")
        if self.lambda_reg < 0:
            raise ValueError(f"lambda_reg must be non-negative, got {self.lambda_reg}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if int(self.taylor_order) != self.taylor_order or self.taylor_order < 1:
            raise InvalidOrder(f"taylor_order must be a positive integer, got {self.taylor_order}")
        if self.log not in ("taylor", "exact"):
            raise ValueError(f"log must be 'taylor' or 'exact', got {self.log!r}")


def _pair(Z1, Z2):
    Z1 = np.asarray(Z1, dtype=float)
    Z2 = np.asarray(Z2, dtype=float)
    if Z1.ndim != 2 or Z1.shape != Z2.shape:
        raise DimensionMismatch(f"embedding shapes {Z1.shape} and {Z2.shape} do not match")
    return Z1, Z2


def coding_scale(d: int, B: int, eps_sq: float) -> float:
    return d / (B * eps_sq)


def tcr_loss(Z, cfg: LossConfig = LossConfig()) -> float:
    """Total coding rate ``-1/2 log det(I + d/(B eps^2) Z Z^T)``."""
    Z = np.asarray(Z, dtype=float)
    d, B = Z.shape
    w = sym_eig(symmetrize(Z @ Z.T)).eigenvalues
    c = coding_scale(d, B, cfg.eps_sq)
    return -0.5 * math.fsum(np.log1p(c * np.clip(w, 0.0, None)))


def mec_loss(Z1, Z2, cfg: LossConfig = LossConfig()) -> float:
    """``-mu tr log(I + c Z1 Z2^T)`` with the log as a Taylor series of ``cfg.taylor_order``."""
    Z1, Z2 = _pair(Z1, Z2)
    d, B = Z1.shape
    A = np.eye(d) + coding_scale(d, B, cfg.eps_sq) * (Z1 @ Z2.T)
    return -cfg.mu * float(np.trace(matrix_log_taylor(A, cfg.taylor_order)))


def mec_loss_check(Z1, Z2, cfg: LossConfig = LossConfig()) -> dict:
    """Taylor MEC value next to the log-det of the symmetrized argument."""
    Z1, Z2 = _pair(Z1, Z2)
    d, B = Z1.shape
    A = np.eye(d) + coding_scale(d, B, cfg.eps_sq) * (Z1 @ Z2.T)
    taylor = mec_loss(Z1, Z2, cfg)
    sign, logdet = np.linalg.slogdet(symmetrize(A))
    exact = -cfg.mu * logdet if sign > 0 else math.nan
    return {"taylor": taylor, "logdet": exact, "gap": taylor - exact}


def rescaled_taylor_trace_log(M, order: int) -> float:
    """``tr log M`` via ``d log s + tr T(M / s)`` with ``s = tr(M) / d``.

    `T` is the truncated series. Dividing by the mean eigenvalue keeps the
    series argument near the identity; the shift ``d log s`` is exact.
    Returns ``nan`` if ``s <= 0``.
    """
    d = M.shape[0]
    s = float(np.trace(M)) / d
    if not s > 0:
        return math.nan
    return d * math.log(s) + float(np.trace(matrix_log_taylor(M / s, order)))


def regularized_cross_cov(Z1, Z2, cfg: LossConfig) -> np.ndarray:
    d = Z1.shape[0]
    return centered_cross_cov(Z1, Z2, cfg.centering) + cfg.lambda_reg * np.eye(d)


def uniformity_loss(Z1, Z2, cfg: LossConfig = LossConfig()) -> float:
    """``MCE(I/d, C(Z1, Z2) + lambda I)``.

    With ``cfg.log == "taylor"`` the trace-log of the (possibly non-symmetric)
    cross-covariance is taken by the rescaled series; with ``"exact"`` the
    matrix is symmetrized and its spectral log is used. A non-positive mean
    eigenvalue on the Taylor route yields ``inf``.
    """
    Z1, Z2 = _pair(Z1, Z2)
    d = Z1.shape[0]
    M = regularized_cross_cov(Z1, Z2, cfg)
    if cfg.log == "exact":
        return mce(np.eye(d) / d, symmetrize(M))
    tr_log = rescaled_taylor_trace_log(M, cfg.taylor_order)
    if math.isnan(tr_log):
        return math.inf
    return -tr_log / d + float(np.trace(M))


def _auto_covs(Z1, Z2, cfg):
    d = Z1.shape[0]
    reg = cfg.lambda_reg * np.eye(d)
    P = symmetrize(centered_cross_cov(Z1, Z1, cfg.centering)) + reg
    Q = symmetrize(centered_cross_cov(Z2, Z2, cfg.centering)) + reg
    return P, Q


def alignment_terms(Z1, Z2, cfg: LossConfig = LossConfig()) -> tuple[float, float]:
    """``(-tr C(Z1, Z2), MCE(C11 + lambda I, C22 + lambda I))``, unweighted."""
    Z1, Z2 = _pair(Z1, Z2)
    trace_term = -float(np.trace(centered_cross_cov(Z1, Z2, cfg.centering)))
    P, Q = _auto_covs(Z1, Z2, cfg)
    return trace_term, mce(P, Q)


def alignment_loss(Z1, Z2, cfg: LossConfig = LossConfig()) -> float:
    trace_term, mce_term = alignment_terms(Z1, Z2, cfg)
    return trace_term + cfg.gamma * mce_term


def matrix_ssl_loss(Z1, Z2, cfg: LossConfig = LossConfig()) -> float:
    return uniformity_loss(Z1, Z2, cfg) + alignment_loss(Z1, Z2, cfg)


def matrix_ssl_kl_loss(Z1, Z2, cfg: LossConfig = LossConfig()) -> float:
    """KL form: ``MKL(I/d || C12 + lambda I) - tr C12 + gamma MKL(C11 + lambda I || C22 + lambda I)``.

    The first divergence reuses the uniformity log route, so it equals
    ``uniformity_loss - ME(I/d)`` with ``ME(I/d) = log d + 1``.
    """
    Z1, Z2 = _pair(Z1, Z2)
    d = Z1.shape[0]
    uniform_kl = uniformity_loss(Z1, Z2, cfg) - (math.log(d) + 1.0)
    trace_term = -float(np.trace(centered_cross_cov(Z1, Z2, cfg.centering)))
    P, Q = _auto_covs(Z1, Z2, cfg)
    return uniform_kl + trace_term + cfg.gamma * mkl(P, Q)


def mse_alignment(Z1, Z2) -> float:
    """BYOL-style squared distance between matched columns."""
    Z1, Z2 = _pair(Z1, Z2)
    return float(np.sum((Z1 - Z2) ** 2))


LOSSES = {
    "tcr": lambda Z1, Z2, cfg: tcr_loss(Z2, cfg),
    "mec": mec_loss,
    "uniformity": uniformity_loss,
    "alignment": alignment_loss,
    "matrix-ssl": matrix_ssl_loss,
    "matrix-ssl-kl": matrix_ssl_kl_loss,
}


def evaluate_loss(name: str, Z1, Z2, cfg: LossConfig = LossConfig()) -> float:
    """Dispatch by loss name; ``tcr`` reads only the second batch."""
    try:
        fn = LOSSES[name]
    except KeyError:
        raise ValueError(f"unknown loss {name!r}; expected one of {', '.join(LOSS_NAMES)}") from None
    return fn(Z1, Z2, cfg)


def loss_decomposition(name: str, Z1, Z2, cfg: LossConfig = LossConfig()) -> dict:
    """Loss value plus its additive parts, keyed for reports."""
    value = evaluate_loss(name, Z1, Z2, cfg)
    out = {"value": value}
    if name in ("alignment", "matrix-ssl", "matrix-ssl-kl"):
        trace_term, mce_term = alignment_terms(Z1, Z2, cfg)
        out["trace_term"] = trace_term
        out["mce_alignment_term"] = mce_term
        if name != "alignment":
            out["uniformity_term"] = uniformity_loss(Z1, Z2, cfg)
        if name == "matrix-ssl-kl":
            P, Q = _auto_covs(*_pair(Z1, Z2), cfg)
            out["mkl_alignment_term"] = mkl(P, Q)
            out["me_branch1"] = matrix_entropy(P)
    elif name == "mec":
        out.update({f"check_{k}": v for k, v in mec_loss_check(Z1, Z2, cfg).items()})
    return out


@dataclass(frozen=True)
class TokenStep:
    """Target and predicted distributions over a vocabulary with unit-norm token embeddings."""

    p: np.ndarray
    q: np.ndarray
    E: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        q = np.asarray(self.q, dtype=float)
        E = np.asarray(self.E, dtype=float)
        n = p.shape[0]
        if p.ndim != 1 or q.shape != p.shape or E.ndim != 2 or E.shape[1] != n:
            raise DimensionMismatch(f"p {p.shape}, q {q.shape}, E {E.shape} are inconsistent")
        for name, v in (("p", p), ("q", q)):
            if np.any(v < 0) or abs(math.fsum(v) - 1.0) > 1e-9:
                raise InvalidDistribution(f"{name} is not a probability vector")
        norms = np.linalg.norm(E, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-8):
            raise InvalidDistribution("token embeddings must have unit norm")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "E", E)

    def matrices(self):
        E = self.E
        return (E * self.p) @ E.T, (E * self.q) @ E.T


def classical_cross_entropy(p, q) -> float:
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return -math.fsum(p[mask] * np.log(q[mask]))


def matrix_llm_loss(steps: Sequence[TokenStep], floor: float = LOG_FLOOR) -> float:
    """Sum over steps of classical CE plus MCE of the embedding-weighted matrices.

    The ``tr(Q)`` part of each MCE term is kept; under unit-norm embeddings
    it is the constant 1 per step.
    """
    steps = list(steps)
    if not steps:
        return 0.0
    E0 = steps[0].E
    terms = []
    for k, step in enumerate(steps):
        if step.E.shape != E0.shape or not np.array_equal(step.E, E0):
            raise EmbeddingMismatch(f"step {k} uses different token embeddings")
        P, Q = step.matrices()
        terms.append(classical_cross_entropy(step.p, step.q))
        terms.append(mce(P, Q, floor))
    if any(math.isinf(t) for t in terms):
        return math.inf
    return math.fsum(terms)
