"""Representation-collapse diagnostics: class-conditional effective ranks and simplex ETFs."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DimensionMismatch,
    NotPartialOrthogonal,
    PreconditionViolated,
    TooFewClasses,
    ZeroMatrix,
)
from .linalg import sym_eig, symmetrize
from .matinfo import erank, erank_or_zero, mkl, vne

logger = logging.getLogger(__name__)

# Scatter entries this small relative to the class's squared feature scale
# are round-off from averaging identical vectors.
COLLAPSE_RTOL = 1e-13
ETF_RTOL = 1e-6


@dataclass(frozen=True)
class LabeledEmbeddings:
    Z: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        Z = np.asarray(self.Z, dtype=float)
        labels = np.asarray(self.labels)
        if Z.ndim != 2 or Z.shape[0] < 1:
            raise DimensionMismatch(f"expected a d x n feature matrix, got shape {Z.shape}")
        if labels.shape != (Z.shape[1],):
            raise DimensionMismatch(f"{labels.size} labels for {Z.shape[1]} samples")
        if labels.size and (labels.min() < 0 or not np.issubdtype(labels.dtype, np.integer)):
            raise PreconditionViolated("labels must be non-negative integers")
        labels = labels.astype(np.int64)
        counts = np.bincount(labels)
        if np.any(counts == 0):
            missing = int(np.flatnonzero(counts == 0)[0])
            raise PreconditionViolated(f"class {missing} has no samples")
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "labels", labels)

    @property
    def K(self) -> int:
        return int(self.labels.max()) + 1

    def class_members(self, c: int) -> np.ndarray:
        return self.Z[:, self.labels == c]

    def class_means(self) -> np.ndarray:
        return np.stack([self.class_members(c).mean(axis=1) for c in range(self.K)], axis=1)


@dataclass
class CollapseReport:
    global_erank: float
    vne_global: float
    mkl_to_uniform: float
    intra_class_erank: float | None = None
    inter_class_erank: float | None = None
    per_class_eranks: list = field(default_factory=list)
    collapsed_classes: list = field(default_factory=list)


def class_scatter(members: np.ndarray) -> np.ndarray:
    centered = members - members.mean(axis=1, keepdims=True)
    return symmetrize(centered @ centered.T / members.shape[1])


def _collapse_atol(members):
    scale = float(np.max(np.sum(members * members, axis=0), initial=0.0))
    return COLLAPSE_RTOL * max(scale, 1e-300)


def intra_class_erank(data: LabeledEmbeddings) -> tuple[float, np.ndarray]:
    """Class-averaged effective rank of within-class covariances.

    Classes are weighted uniformly. A class whose scatter vanishes counts as 0.
    """
    per_class = np.empty(data.K)
    for c in range(data.K):
        members = data.class_members(c)
        per_class[c] = erank_or_zero(class_scatter(members), atol=_collapse_atol(members))
    return math.fsum(per_class) / data.K, per_class


def between_class_scatter(data: LabeledEmbeddings) -> np.ndarray:
    mu_g = data.Z.mean(axis=1, keepdims=True)
    diffs = data.class_means() - mu_g
    return symmetrize(diffs @ diffs.T / data.K)


def inter_class_erank(data: LabeledEmbeddings) -> float:
    if data.K < 2:
        raise TooFewClasses(f"inter-class effective rank needs K >= 2, got {data.K}")
    return erank_or_zero(between_class_scatter(data), atol=_collapse_atol(data.Z))


def standard_simplex(K: int) -> np.ndarray:
    return math.sqrt(K / (K - 1)) * (np.eye(K) - np.full((K, K), 1.0 / K))


def build_simplex_etf(K: int, d: int, alpha: float = 1.0, U=None) -> np.ndarray:
    """General simplex ETF ``alpha * U @ M`` as a ``d x K`` matrix.

    `U` defaults to the canonical embedding of R^K into R^d.
    """
    if K < 2:
        raise PreconditionViolated(f"a simplex ETF needs K >= 2, got {K}")
    if d < K:
        raise DimensionMismatch(f"d = {d} is smaller than K = {K}")
    if not alpha > 0:
        raise PreconditionViolated(f"alpha must be positive, got {alpha}")
    if U is None:
        U = np.eye(d, K)
    U = np.asarray(U, dtype=float)
    if U.shape != (d, K):
        raise DimensionMismatch(f"U has shape {U.shape}, expected {(d, K)}")
    if np.max(np.abs(U.T @ U - np.eye(K))) > 1e-8:
        raise NotPartialOrthogonal("U^T U differs from the identity by more than 1e-8")
    return alpha * U @ standard_simplex(K)


@dataclass(frozen=True)
class EtfCheck:
    erank: float
    is_etf: bool
    gram_residual: float


def etf_erank_check(V, unit_tol: float = 1e-6, mean_tol: float = 1e-6) -> EtfCheck:
    """Effective rank of the Gram matrix and a spectral simplex-ETF test.

    The Gram matrix of K zero-mean unit vectors is an ETF Gram up to rotation
    iff its spectrum is ``K/(K-1)`` with multiplicity K-1 plus one zero.
    `gram_residual` is the max deviation from that spectrum.
    """
    V = np.asarray(V, dtype=float)
    K = V.shape[1]
    if K < 2:
        raise PreconditionViolated("need at least two columns")
    norms = np.linalg.norm(V, axis=0)
    bad = np.flatnonzero(np.abs(norms - 1.0) > unit_tol)
    if bad.size:
        raise PreconditionViolated(f"column {bad[0]} has norm {norms[bad[0]]:.9g}, expected 1")
    mean = V.mean(axis=1)
    if np.max(np.abs(mean)) > mean_tol:
        i = int(np.argmax(np.abs(mean)))
        raise PreconditionViolated(f"column mean has entry {i} = {mean[i]:.3e}, expected 0")
    gram = symmetrize(V.T @ V)
    w = sym_eig(gram).eigenvalues
    target = np.full(K, K / (K - 1))
    target[-1] = 0.0
    residual = float(np.max(np.abs(w - target)))
    is_etf = residual <= ETF_RTOL * K / (K - 1)
    value = erank(gram)
    if is_etf and abs(value - (K - 1)) > 1e-8:
        logger.warning("spectral ETF test passed but erank %.12g differs from K-1", value)
    return EtfCheck(value, bool(is_etf), residual)


def gram_erank(Z) -> float:
    """Effective rank of ``Z^T Z``, cross-checked against ``Z Z^T``."""
    Z = np.asarray(Z, dtype=float)
    if not np.any(Z):
        raise ZeroMatrix("all-zero embedding batch")
    small = erank(symmetrize(Z.T @ Z))
    large = erank(symmetrize(Z @ Z.T))
    if abs(small - large) > 1e-9 * max(1.0, small):
        logger.warning("Gram/covariance effective ranks disagree: %.17g vs %.17g", small, large)
    return small


def covariance_metrics(Z) -> tuple[float, float, float]:
    """erank, VNE and MKL to I/d of the uncentered covariance ``Z Z^T / B``."""
    Z = np.asarray(Z, dtype=float)
    d, B = Z.shape
    C = symmetrize(Z @ Z.T / B)
    return erank(C), vne(C), mkl(C, np.eye(d) / d)


def collapse_report(Z, labels=None) -> CollapseReport:
    g_erank, g_vne, g_mkl = covariance_metrics(Z)
    report = CollapseReport(g_erank, g_vne, g_mkl)
    if labels is None:
        return report
    data = LabeledEmbeddings(Z, labels)
    intra, per_class = intra_class_erank(data)
    report.intra_class_erank = intra
    report.per_class_eranks = [float(v) for v in per_class]
    report.collapsed_classes = [int(c) for c in np.flatnonzero(per_class == 0.0)]
    if data.K >= 2:
        report.inter_class_erank = inter_class_erank(data)
    return report
