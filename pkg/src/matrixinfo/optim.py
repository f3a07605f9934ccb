"""Analytic gradients, finite-difference checking and toy gradient-descent runs.

Gradients are taken with respect to the Frobenius inner product, so a
gradient has the same shape as its argument. The descent demonstrator
treats embedding columns as free parameters on the unit sphere.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from .errors import DimensionMismatch, Diverged, NotPSD, Singular
from .linalg import LOG_FLOOR, normalize_columns, sym_eig, symmetrize
from .losses import LossConfig, coding_scale, evaluate_loss, tcr_loss
from .matinfo import erank, mce, mkl

DEGENERATE_GAP = 1e-10


def finite_difference_gradient(f: Callable[[np.ndarray], float], X, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function of an array."""
    X = np.array(X, dtype=float, copy=True)
    grad = np.empty_like(X)
    flat = X.reshape(-1)
    g = grad.reshape(-1)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + h
        f_plus = f(X)
        flat[k] = orig - h
        f_minus = f(X)
        flat[k] = orig
        g[k] = (f_plus - f_minus) / (2.0 * h)
    return grad


def relative_error(approx, exact) -> float:
    """``||approx - exact||_F / ||exact||_F`` (absolute when ``exact`` is zero)."""
    approx = np.asarray(approx, dtype=float)
    exact = np.asarray(exact, dtype=float)
    scale = np.linalg.norm(exact)
    diff = np.linalg.norm(approx - exact)
    return float(diff / scale) if scale > 0 else float(diff)


def _spd_spectrum(Q, floor=LOG_FLOOR):
    w, V = sym_eig(Q)
    if w[-1] <= floor:
        raise Singular(f"Q has eigenvalue {w[-1]:.3e} at or below the floor {floor:g}")
    return w, V


def grad_mce_q_commuting(P, Q) -> np.ndarray:
    """``sym(-P Q^{-1} + I)``: the MCE gradient in Q, exact only when P and Q commute."""
    P = np.asarray(P, dtype=float)
    w, V = _spd_spectrum(Q)
    Q_inv = (V / w) @ V.T
    return symmetrize(-P @ Q_inv + np.eye(P.shape[0]))


def log_divided_differences(w) -> np.ndarray:
    """First divided differences of log on the eigenvalues `w`."""
    wi = w[:, None]
    wj = w[None, :]
    delta = wi - wj
    close = np.abs(delta) < DEGENERATE_GAP
    safe = np.where(close, 1.0, delta)
    # log1p keeps the quotient accurate when eigenvalues are close but distinct
    L = np.log1p(safe / wj) / safe
    limit = np.broadcast_to(1.0 / wi, L.shape)
    return np.where(close, limit, L)


def grad_tr_plogq(P, Q) -> np.ndarray:
    """Exact gradient of ``Q -> tr(P log Q)`` via the Daleckii-Krein formula."""
    P = symmetrize(P)
    w, V = _spd_spectrum(Q)
    P_tilde = V.T @ P @ V
    return symmetrize(V @ (P_tilde * log_divided_differences(w)) @ V.T)


def grad_mce_q(P, Q, exact: bool = True) -> np.ndarray:
    """Gradient in Q of ``MCE(P, Q)`` (identical for ``MKL(P || Q)``)."""
    if not exact:
        return grad_mce_q_commuting(P, Q)
    return -grad_tr_plogq(P, Q) + np.eye(np.asarray(P).shape[0])


def _taylor_trace_grad(X, order):
    """Gradient of ``tr T(X)`` where T is the truncated log(I + X) series."""
    n = X.shape[0]
    G = np.eye(n)
    power = np.eye(n)
    for m in range(2, order + 1):
        power = power @ X
        G = G + (-1.0) ** (m + 1) * power
    return G.T


def _uniformity_value_grad_M(M, cfg: LossConfig):
    """Value and gradient in M of ``-(1/d) tr log M + tr M``."""
    d = M.shape[0]
    eye = np.eye(d)
    if cfg.log == "exact":
        S = symmetrize(M)
        w, V = sym_eig(S)
        if w[-1] <= LOG_FLOOR:
            raise NotPSD(f"symmetrized cross-covariance has eigenvalue {w[-1]:.3e}")
        value = mce(eye / d, S)
        return value, -(V / w) @ V.T / d + eye
    s = float(np.trace(M)) / d
    if not s > 0:
        raise NotPSD(f"cross-covariance has non-positive mean eigenvalue {s:.3e}")
    X = M / s - eye
    tr_series = 0.0
    power = np.eye(d)
    for m in range(1, cfg.taylor_order + 1):
        power = power @ X
        tr_series += (-1.0) ** (m + 1) / m * float(np.trace(power))
    value = -(d * math.log(s) + tr_series) / d + float(np.trace(M))
    Gx = _taylor_trace_grad(X, cfg.taylor_order)
    grad_f = Gx / s + (1.0 / s - float(np.sum(Gx * M)) / (s * s * d)) * eye
    return value, -grad_f / d + eye


def _center(Z, centering):
    return Z - Z.mean(axis=1, keepdims=True) if centering else Z


class LossGrad(NamedTuple):
    value: float
    grad_z1: np.ndarray | None
    grad_z2: np.ndarray


def loss_and_grad(name: str, Z1, Z2, cfg: LossConfig = LossConfig(), wrt_z1: bool | None = None) -> LossGrad:
    """Loss value with analytic gradients.

    `wrt_z1` defaults to ``not cfg.stop_grad_branch1``; when false the first
    branch is a constant and ``grad_z1`` is None. ``tcr`` depends on Z2 only.
    """
    Z1 = np.asarray(Z1, dtype=float)
    Z2 = np.asarray(Z2, dtype=float)
    if Z1.shape != Z2.shape or Z1.ndim != 2:
        raise DimensionMismatch(f"embedding shapes {Z1.shape} and {Z2.shape} do not match")
    if wrt_z1 is None:
        wrt_z1 = not cfg.stop_grad_branch1
    d, B = Z1.shape
    eye = np.eye(d)

    if name == "tcr":
        c = coding_scale(d, B, cfg.eps_sq)
        A = eye + c * symmetrize(Z2 @ Z2.T)
        g2 = -c * np.linalg.solve(A, Z2)
        return LossGrad(tcr_loss(Z2, cfg), np.zeros_like(Z1) if wrt_z1 else None, g2)

    if name == "mec":
        c = coding_scale(d, B, cfg.eps_sq)
        X = c * (Z1 @ Z2.T)
        Gx = _taylor_trace_grad(X, cfg.taylor_order)
        value = evaluate_loss("mec", Z1, Z2, cfg)
        g2 = -cfg.mu * c * Gx.T @ Z1
        g1 = -cfg.mu * c * Gx @ Z2 if wrt_z1 else None
        return LossGrad(value, g1, g2)

    if name not in ("uniformity", "alignment", "matrix-ssl", "matrix-ssl-kl"):
        raise ValueError(f"no analytic gradient for loss {name!r}")

    Z1c = _center(Z1, cfg.centering)
    Z2c = _center(Z2, cfg.centering)
    value = 0.0
    g1 = np.zeros_like(Z1)
    g2 = np.zeros_like(Z2)

    if name != "alignment":
        M = Z1c @ Z2.T / B + cfg.lambda_reg * eye
        u_value, G = _uniformity_value_grad_M(M, cfg)
        value += u_value
        if name == "matrix-ssl-kl":
            value -= math.log(d) + 1.0
        g2 += G.T @ Z1c / B
        g1 += G @ Z2c / B

    if name == "uniformity":
        return LossGrad(value, g1 if wrt_z1 else None, g2)

    # -tr C(Z1, Z2)
    value -= float(np.trace(Z1c @ Z2.T)) / B
    g2 -= Z1c / B
    g1 -= Z2c / B

    if cfg.gamma != 0.0:
        P = symmetrize(Z1c @ Z1.T / B) + cfg.lambda_reg * eye
        Q = symmetrize(Z2c @ Z2.T / B) + cfg.lambda_reg * eye
        w, V = _spd_spectrum(Q)
        log_Q = (V * np.log(w)) @ V.T
        if name == "matrix-ssl-kl":
            value += cfg.gamma * mkl(P, Q)
        else:
            value += cfg.gamma * mce(P, Q)
        Gq = -symmetrize(V @ ((V.T @ P @ V) * log_divided_differences(w)) @ V.T) + eye
        g2 += cfg.gamma * 2.0 * Gq @ Z2c / B
        if wrt_z1:
            if name == "matrix-ssl-kl":
                pw, pV = _spd_spectrum(P)
                Gp = (pV * np.log(pw)) @ pV.T - log_Q
            else:
                Gp = -log_Q
            g1 += cfg.gamma * 2.0 * Gp @ Z1c / B

    return LossGrad(value, g1 if wrt_z1 else None, g2)


def grad_matrix_ssl(Z1, Z2, cfg: LossConfig = LossConfig()):
    """Gradient of the Matrix-SSL loss as ``(grad_z1 or None, grad_z2)``."""
    _, g1, g2 = loss_and_grad("matrix-ssl", Z1, Z2, cfg)
    return g1, g2


def tangent_projection(Z, G) -> np.ndarray:
    """Project each column of G onto the tangent space of the sphere at Z's column."""
    return G - Z * np.sum(Z * G, axis=0, keepdims=True)


@dataclass(frozen=True)
class DescentConfig:
    seed: int
    step_size: float = 0.05
    max_iters: int = 5000
    tol_grad_norm: float = 1e-7
    project_sphere: bool = True
    backtracking: bool = False

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.max_iters < 0:
            raise ValueError(f"max_iters must be non-negative, got {self.max_iters}")
        if self.seed < 0:
            raise ValueError("seed must be an unsigned integer")


@dataclass(frozen=True)
class TrajectoryRecord:
    iter: int
    loss: float
    erank: float
    dist_to_uniform: float
    grad_norm: float


CSV_FIELDS = ("iter", "loss", "erank", "dist_to_uniform", "grad_norm")


@dataclass
class Trajectory:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i) -> TrajectoryRecord:
        return self.records[i]

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_FIELDS)
        for r in self.records:
            writer.writerow([r.iter] + [format(getattr(r, k), ".17g") for k in CSV_FIELDS[1:]])
        return buf.getvalue()


def random_views(d: int, B: int, seed: int, noise: float = 0.3):
    """Two correlated unit-norm views of a shared random batch.

    Entries are standard normal; each view adds independent noise scaled
    by `noise` before column normalization. One seeded generator drives all draws.
    """
    rng = np.random.default_rng(seed)
    base = rng.standard_normal((d, B))
    Z1 = normalize_columns(base + noise * rng.standard_normal((d, B)))
    Z2 = normalize_columns(base + noise * rng.standard_normal((d, B)))
    return Z1, Z2


def covariance_state(Z):
    d, B = Z.shape
    C = symmetrize(Z @ Z.T / B)
    return erank(C), float(np.linalg.norm(C - np.eye(d) / d))


class DescentResult(NamedTuple):
    trajectory: Trajectory
    Z1: np.ndarray
    Z2: np.ndarray


def descend_matrix_ssl(Z1, Z2, loss_cfg: LossConfig = LossConfig(), dcfg: DescentConfig | None = None,
                       loss: str = "matrix-ssl") -> DescentResult:
    """Projected gradient descent on the embedding columns.

    With ``loss_cfg.stop_grad_branch1`` the two branches share parameters:
    only Z2 receives gradient steps and Z1 is replaced by a detached copy of
    Z2 after each step. Otherwise both branches descend jointly. Metrics are
    recorded on Z2.
    """
    if dcfg is None:
        dcfg = DescentConfig(seed=0)
    Z1 = np.array(Z1, dtype=float, copy=True)
    Z2 = np.array(Z2, dtype=float, copy=True)
    if dcfg.project_sphere:
        Z1, Z2 = normalize_columns(Z1), normalize_columns(Z2)
    joint = not loss_cfg.stop_grad_branch1
    traj = Trajectory()

    def project(Z, G):
        return tangent_projection(Z, G) if dcfg.project_sphere else G

    def retract(Z):
        return normalize_columns(Z) if dcfg.project_sphere else Z

    def evaluate(A, B_):
        try:
            return loss_and_grad(loss, A, B_, loss_cfg, wrt_z1=joint)
        except (NotPSD, Singular, np.linalg.LinAlgError):
            return None

    state = evaluate(Z1, Z2)
    for it in range(dcfg.max_iters + 1):
        if state is None or not math.isfinite(state.value):
            raise Diverged(it, traj, (Z1, Z2))
        pg2 = project(Z2, state.grad_z2)
        pg1 = project(Z1, state.grad_z1) if joint else None
        sq = float(np.sum(pg2 * pg2)) + (float(np.sum(pg1 * pg1)) if joint else 0.0)
        g_norm = math.sqrt(sq)
        e, dist = covariance_state(Z2)
        traj.records.append(TrajectoryRecord(it, state.value, e, dist, g_norm))
        if g_norm <= dcfg.tol_grad_norm or it == dcfg.max_iters:
            break

        t = dcfg.step_size
        while True:
            new_Z2 = retract(Z2 - t * pg2)
            new_Z1 = retract(Z1 - t * pg1) if joint else Z1
            new_state = evaluate(new_Z1, new_Z2)
            if not dcfg.backtracking:
                break
            if new_state is not None and new_state.value <= state.value - 1e-4 * t * sq:
                break
            t *= 0.5
            if t < 1e-16:
                new_Z1, new_Z2, new_state = Z1, Z2, state
                break
        if new_state is state:
            break
        Z1, Z2 = new_Z1, new_Z2
        if not joint and loss != "tcr":
            Z1 = Z2.copy()
            new_state = evaluate(Z1, Z2)
        state = new_state
    return DescentResult(traj, Z1, Z2)


def orthogonal_frame(d: int, B: int) -> np.ndarray:
    """Unit columns ``+-e_i`` tiled so that ``Z Z^T / B = I / d``.

    Requires ``B`` to be a multiple of ``d``; the column mean is zero when
    ``B`` is a multiple of ``2d``.
    """
    if B % d:
        raise DimensionMismatch(f"B = {B} is not a multiple of d = {d}")
    cols = [((-1.0) ** (k // d)) * np.eye(d)[:, k % d] for k in range(B)]
    return np.stack(cols, axis=1)


class MceDescent(NamedTuple):
    Q: np.ndarray
    iterations: int
    grad_norm: float


def descend_mce_to_p(P, init_q, dcfg: DescentConfig | None = None, exact_gradient: bool = True,
                     spd_floor: float = 1e-8) -> MceDescent:
    """Gradient descent on Q for ``MCE(P, Q)`` over SPD matrices.

    After each step Q is symmetrized and its eigenvalues are clamped at
    `spd_floor`. The gradient is the same for ``MKL(P || Q)``.
    """
    if dcfg is None:
        dcfg = DescentConfig(seed=0)
    P = symmetrize(P)
    Q = symmetrize(init_q)
    g_norm = math.inf
    for it in range(dcfg.max_iters + 1):
        G = grad_mce_q(P, Q, exact=exact_gradient)
        g_norm = float(np.linalg.norm(G))
        if not math.isfinite(g_norm):
            raise Diverged(it, state=Q)
        if g_norm <= dcfg.tol_grad_norm or it == dcfg.max_iters:
            return MceDescent(Q, it, g_norm)
        w, V = sym_eig(symmetrize(Q - dcfg.step_size * G))
        Q = symmetrize((V * np.maximum(w, spd_floor)) @ V.T)
    return MceDescent(Q, dcfg.max_iters, g_norm)


def thm41_closed_forms(d: int, lam: float, tcr: float) -> dict:
    """Closed forms of the regularized uniformity MCE/MKL in terms of TCR.

    ``corrected_*`` carry the TCR coefficient ``2(1 + d lam)/d`` obtained by
    direct evaluation; ``stated_*`` carry ``2(1 + d lam)``.
    """
    a = 1.0 + d * lam
    return {
        "corrected_mce": -a * math.log(lam) + 2.0 * a / d * tcr + a,
        "corrected_mkl": a * math.log(a / (lam * d)) + 2.0 * a / d * tcr,
        "stated_mce": a * (-math.log(lam) + 1.0 + 2.0 * tcr),
        "stated_mkl": a * (math.log(a / (lam * d)) + 2.0 * tcr),
    }


def thm41_instance(Z, eps_sq: float) -> dict:
    Z = np.asarray(Z, dtype=float)
    d, B = Z.shape
    lam = eps_sq / d
    P = (1.0 / d + lam) * np.eye(d)
    Q = symmetrize(Z @ Z.T / B) + lam * np.eye(d)
    tcr = tcr_loss(Z, LossConfig(eps_sq=eps_sq))
    row = {"d": d, "B": B, "eps_sq": eps_sq, "lambda": lam, "tcr": tcr,
           "direct_mce": mce(P, Q), "direct_mkl": mkl(P, Q)}
    row.update(thm41_closed_forms(d, lam, tcr))
    for kind in ("mce", "mkl"):
        direct = row[f"direct_{kind}"]
        for form in ("corrected", "stated"):
            gap = abs(row[f"{form}_{kind}"] - direct)
            row[f"{form}_{kind}_abs_err"] = gap
            row[f"{form}_{kind}_rel_err"] = gap / abs(direct) if direct != 0 else gap
    return row


def verify_theorem_4_1(trials: int, seed: int, rel_tol: float = 1e-9) -> dict:
    """Compare direct MCE/MKL evaluation against both closed forms.

    Random instances draw d in [2, 8], B in [d, 4d], eps^2 in [0.25, 4] and
    unit-norm Gaussian columns. Three d = 1 instances are appended, where
    both forms must coincide.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rows = []
    for child in np.random.SeedSequence(seed).spawn(trials):
        rng = np.random.default_rng(child)
        d = int(rng.integers(2, 9))
        B = int(rng.integers(d, 4 * d + 1))
        eps_sq = float(rng.uniform(0.25, 4.0))
        rows.append(thm41_instance(normalize_columns(rng.standard_normal((d, B))), eps_sq))
    rng = np.random.default_rng(np.random.SeedSequence([seed, 1]))
    for _ in range(3):
        B = int(rng.integers(1, 9))
        rows.append(thm41_instance(normalize_columns(rng.standard_normal((1, B))), float(rng.uniform(0.25, 4.0))))
    corrected_ok = all(r["corrected_mce_rel_err"] <= rel_tol and r["corrected_mkl_rel_err"] <= rel_tol for r in rows)
    return {
        "rows": rows,
        "corrected_max_rel_err": max(max(r["corrected_mce_rel_err"], r["corrected_mkl_rel_err"]) for r in rows),
        "stated_max_rel_err_d1": max(max(r["stated_mce_rel_err"], r["stated_mkl_rel_err"]) for r in rows if r["d"] == 1),
        "stated_min_abs_err_d_ge_2": min(min(r["stated_mce_abs_err"], r["stated_mkl_abs_err"]) for r in rows if r["d"] >= 2),
        "corrected_ok": corrected_ok,
    }
