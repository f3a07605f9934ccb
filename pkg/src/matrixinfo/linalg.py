"""Dense symmetric linear algebra used by every other module.

Symmetric eigendecomposition (LAPACK or cyclic Jacobi), principal matrix
logarithm through the spectrum or a truncated Taylor series, PSD helpers
and centered (cross-)covariance construction.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import (
    DimensionMismatch,
    InvalidOrder,
    NonConvergence,
    NotPSD,
    NotSymmetric,
    Singular,
)

SYM_TOL = 1e-10
PSD_TOL = 1e-9
LOG_FLOOR = 1e-12


class Spectrum(NamedTuple):
    """Eigenvalues (descending) and orthonormal eigenvectors (columns)."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        V = self.eigenvectors
        return (V * self.eigenvalues) @ V.T


@dataclass(frozen=True)
class EmbeddingBatch:
    """A d x B matrix whose columns are feature vectors."""

    columns: np.ndarray
    unit_norm: bool = False

    def __post_init__(self):
        Z = np.array(self.columns, dtype=float)
        if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 1:
            raise DimensionMismatch(f"expected a non-empty d x B matrix, got shape {Z.shape}")
        if self.unit_norm:
            norms = np.linalg.norm(Z, axis=0)
            bad = np.flatnonzero(np.abs(norms - 1.0) > 1e-8)
            if bad.size:
                raise ValueError(f"column {bad[0]} has norm {norms[bad[0]]!r}, expected 1")
        Z.setflags(write=False)
        object.__setattr__(self, "columns", Z)

    @property
    def d(self) -> int:
        return self.columns.shape[0]

    @property
    def B(self) -> int:
        return self.columns.shape[1]

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.columns, dtype=dtype)

    @classmethod
    def normalized(cls, Z) -> "EmbeddingBatch":
        return cls(normalize_columns(Z), unit_norm=True)


def normalize_columns(Z) -> np.ndarray:
    Z = np.asarray(Z, dtype=float)
    return Z / np.linalg.norm(Z, axis=0, keepdims=True)


def symmetrize(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + A.T)


def check_symmetric(A, sym_tol: float = SYM_TOL) -> np.ndarray:
    """Return `A` as a float array, raising NotSymmetric beyond `sym_tol`."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise DimensionMismatch(f"expected a non-empty square matrix, got shape {A.shape}")
    gap = np.abs(A - A.T)
    bound = sym_tol * np.maximum(1.0, np.abs(A))
    if np.any(gap > bound):
        i, j = np.unravel_index(np.argmax(gap - bound), A.shape)
        raise NotSymmetric(f"entries ({i},{j}) and ({j},{i}) differ by {gap[i, j]:.3e}")
    return A


def jacobi_eigh(A, tol: float = 1e-12, max_sweeps: int = 100):
    """Cyclic Jacobi eigenvalue iteration for a symmetric matrix.

    Sweeps over all (p, q) pairs, annihilating each off-diagonal entry with
    a plane rotation, until the off-diagonal Frobenius norm drops below
    ``tol * ||A||_F``.

    Returns
    -------
    w : ndarray
        Eigenvalues, in no particular order.
    V : ndarray
        Orthonormal eigenvectors as columns, ``A V = V diag(w)``.
    """
    a = np.array(A, dtype=float, copy=True)
    n = a.shape[0]
    V = np.eye(n)
    scale = np.linalg.norm(a)
    for _ in range(max_sweeps):
        off = math.sqrt(max(0.0, np.sum(a * a) - np.sum(np.diag(a) ** 2)))
        if off <= tol * scale:
            return np.diag(a).copy(), V
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                col_p = a[:, p].copy()
                a[:, p] = c * col_p - s * a[:, q]
                a[:, q] = s * col_p + c * a[:, q]
                row_p = a[p, :].copy()
                a[p, :] = c * row_p - s * a[q, :]
                a[q, :] = s * row_p + c * a[q, :]
                a[p, q] = a[q, p] = 0.0
                vp = V[:, p].copy()
                V[:, p] = c * vp - s * V[:, q]
                V[:, q] = s * vp + c * V[:, q]
    raise NonConvergence(f"Jacobi iteration did not converge within {max_sweeps} sweeps")


def sym_eig(A, method: str = "lapack", sym_tol: float = SYM_TOL) -> Spectrum:
    """Eigendecomposition of a symmetric matrix, eigenvalues descending.

    Eigenvalues in ``[-PSD_TOL, 0)`` are round-off on PSD input and are
    clamped to zero. `method` is ``"lapack"`` (default) or ``"jacobi"``.
    """
    A = check_symmetric(A, sym_tol)
    A = symmetrize(A)
    if method == "jacobi":
        w, V = jacobi_eigh(A)
    elif method == "lapack":
        try:
            w, V = np.linalg.eigh(A)
        except np.linalg.LinAlgError as exc:
            raise NonConvergence(str(exc)) from exc
    else:
        raise ValueError(f"unknown eigensolver {method!r}")
    order = np.argsort(w)[::-1]
    w = w[order]
    V = V[:, order]
    w = np.where((w < 0.0) & (w >= -PSD_TOL), 0.0, w)
    return Spectrum(w, V)


def spectral_map(A, fn: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    w, V = sym_eig(A)
    return (V * fn(w)) @ V.T


def floored_log(w, floor: float = LOG_FLOOR) -> np.ndarray:
    """Elementwise log with ``log(x) := 0`` for ``x <= floor``."""
    w = np.asarray(w, dtype=float)
    out = np.zeros_like(w)
    mask = w > floor
    out[mask] = np.log(w[mask])
    return out


def matrix_log_spectral(A, floor: float = LOG_FLOOR) -> np.ndarray:
    """Principal logarithm of a PSD matrix with the ``log(0) := 0`` convention."""
    w, V = sym_eig(A)
    if w[-1] < -PSD_TOL:
        raise NotPSD(f"minimum eigenvalue {w[-1]:.3e} is negative")
    return (V * floored_log(w, floor)) @ V.T


def _check_series_region(X):
    spec = np.linalg.norm(X, 2)
    if spec >= 1.0:
        fro = np.linalg.norm(X, "fro")
        warnings.warn(
            f"||A - I||_2 = {spec:.4g} (Frobenius {fro:.4g}) is not < 1; "
            "the log series may not converge",
            RuntimeWarning,
            stacklevel=3,
        )
    return spec


def matrix_log_taylor(A, order: int, check: bool = False) -> np.ndarray:
    """Truncated Mercator series ``sum_{m<=order} (-1)^{m+1} (A - I)^m / m``.

    Works for non-symmetric `A`; converges when ``||A - I|| < 1``. With
    ``check=True`` the spectral norm condition is tested and a RuntimeWarning
    is issued when it fails.
    """
    if int(order) != order or order < 1:
        raise InvalidOrder(f"Taylor order must be a positive integer, got {order!r}")
    A = np.asarray(A, dtype=float)
    n = A.shape[0]
    X = A - np.eye(n)
    if check:
        _check_series_region(X)
    out = np.zeros_like(X)
    power = np.eye(n)
    for m in range(1, int(order) + 1):
        power = power @ X
        out += ((-1.0) ** (m + 1) / m) * power
    return out


def matrix_exp_series(A, order: int = 40) -> np.ndarray:
    """Truncated exponential series ``sum_{m<=order} A^m / m!``."""
    A = np.asarray(A, dtype=float)
    out = np.eye(A.shape[0])
    term = np.eye(A.shape[0])
    for m in range(1, order + 1):
        term = term @ A / m
        out = out + term
    return out


def centering_matrix(B: int) -> np.ndarray:
    return np.eye(B) - np.full((B, B), 1.0 / B)


def centered_cross_cov(Z1, Z2, centering: bool = True) -> np.ndarray:
    """``(1/B) Z1 H_B Z2^T``; with ``centering=False`` the raw ``(1/B) Z1 Z2^T``."""
    Z1 = np.asarray(Z1, dtype=float)
    Z2 = np.asarray(Z2, dtype=float)
    if Z1.shape != Z2.shape or Z1.ndim != 2:
        raise DimensionMismatch(f"shapes {Z1.shape} and {Z2.shape} do not match")
    B = Z1.shape[1]
    if not centering:
        return Z1 @ Z2.T / B
    if B < 2:
        raise DimensionMismatch("centered covariance needs at least two columns")
    # Z H_B = Z - row means, cheaper than forming H_B
    return (Z1 - Z1.mean(axis=1, keepdims=True)) @ Z2.T / B


def is_psd(A, tol: float = PSD_TOL) -> bool:
    A = symmetrize(check_symmetric(A))
    return bool(np.linalg.eigvalsh(A)[0] >= -tol)


def logdet_spd(A, floor: float = LOG_FLOOR) -> float:
    w, _ = sym_eig(A)
    if w[-1] <= floor:
        raise Singular(f"minimum eigenvalue {w[-1]:.3e} is not above the floor {floor:g}")
    return math.fsum(np.log(w))
