"""Matrix entropy, von Neumann entropy, matrix KL / cross-entropy and effective rank.

All logarithms are natural. Eigenvalues at or below ``floor`` contribute
``log(0) := 0``, so ``0 log 0`` terms vanish.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NotPSD, ZeroMatrix
from .linalg import LOG_FLOOR, floored_log, sym_eig, symmetrize


def _psd_spectrum(A, name="matrix"):
    w, V = sym_eig(A)
    if w[-1] < 0.0:
        raise NotPSD(f"{name} has eigenvalue {w[-1]:.3e} < 0")
    return w, V


def _xlogx_sum(w, floor):
    return math.fsum(w * floored_log(w, floor))


def matrix_entropy(A, floor: float = LOG_FLOOR) -> float:
    """``-tr(A log A) + tr(A)`` for PSD `A`."""
    w, _ = _psd_spectrum(A)
    return -_xlogx_sum(w, floor) + math.fsum(w)


def vne(A, floor: float = LOG_FLOOR) -> float:
    """Von Neumann entropy ``-tr(A log A)``."""
    w, _ = _psd_spectrum(A)
    return -_xlogx_sum(w, floor)


def _tr_p_log_q(P, q_w, q_V, floor):
    """``tr(P log Q)`` in Q's eigenbasis, or None if P has mass where Q vanishes."""
    mass = np.einsum("ij,ik,kj->j", q_V, P, q_V)
    null = q_w <= floor
    mass_tol = max(floor, 1e-10 * max(1.0, float(np.trace(P))))
    if np.any(mass[null] > mass_tol):
        return None
    return math.fsum(mass * floored_log(q_w, floor))


def mkl(P, Q, floor: float = LOG_FLOOR) -> float:
    """Matrix KL divergence ``tr(P log P - P log Q - P + Q)``.

    Returns ``inf`` when Q is (floored-)singular along a direction carrying
    mass of P.
    """
    p_w, _ = _psd_spectrum(P, "P")
    q_w, q_V = _psd_spectrum(Q, "Q")
    cross = _tr_p_log_q(symmetrize(P), q_w, q_V, floor)
    if cross is None:
        return math.inf
    return _xlogx_sum(p_w, floor) - cross - math.fsum(p_w) + math.fsum(q_w)


def mce(P, Q, floor: float = LOG_FLOOR) -> float:
    """Matrix cross-entropy ``tr(-P log Q + Q)``; ``inf`` under the same rule as `mkl`."""
    _psd_spectrum(P, "P")
    q_w, q_V = _psd_spectrum(Q, "Q")
    cross = _tr_p_log_q(symmetrize(P), q_w, q_V, floor)
    if cross is None:
        return math.inf
    return -cross + math.fsum(q_w)


def shannon_entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return -math.fsum(nz * np.log(nz))


def erank_from_spectrum(sigma) -> float:
    """``exp(H(p))`` with ``p = sigma / sum(sigma)``."""
    sigma = np.abs(np.asarray(sigma, dtype=float))
    total = math.fsum(sigma)
    if total == 0.0:
        raise ZeroMatrix("effective rank is undefined for an all-zero spectrum")
    return math.exp(shannon_entropy(sigma / total))


def singular_values(A) -> np.ndarray:
    """Singular values; |eigenvalues| for symmetric input, else sqrt(eig(A^T A))."""
    A = np.asarray(A, dtype=float)
    if np.allclose(A, A.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(A).max(initial=0.0))):
        return np.abs(sym_eig(symmetrize(A), sym_tol=np.inf).eigenvalues)
    w = sym_eig(A.T @ A).eigenvalues
    return np.sqrt(np.clip(w, 0.0, None))


def erank(A) -> float:
    """Effective rank of a non-zero square matrix."""
    A = np.asarray(A, dtype=float)
    if not np.any(A):
        raise ZeroMatrix("effective rank is undefined for the all-zero matrix")
    return erank_from_spectrum(singular_values(A))


def erank_or_zero(A, atol: float = 0.0) -> float:
    """`erank`, but 0 for a matrix whose entries are all within `atol` of zero."""
    A = np.asarray(A, dtype=float)
    if np.max(np.abs(A), initial=0.0) <= atol:
        return 0.0
    return erank(A)
