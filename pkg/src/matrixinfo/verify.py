"""Numerical check batteries behind ``matrixinfo verify``.

Each suite returns ``(results, checks)``. A check passes iff
``|measured - expected| <= tolerance``; one-sided conditions are encoded as
the size of the violation with expected 0.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .collapse import build_simplex_etf, etf_erank_check
from .fileio import check
from .linalg import matrix_log_spectral, matrix_log_taylor, normalize_columns, symmetrize
from .losses import LossConfig, alignment_terms, evaluate_loss, mse_alignment, tcr_loss
from .matinfo import erank, matrix_entropy, mkl, vne
from .optim import (
    DescentConfig,
    descend_matrix_ssl,
    descend_mce_to_p,
    finite_difference_gradient,
    loss_and_grad,
    orthogonal_frame,
    random_views,
    thm41_instance,
    verify_theorem_4_1,
)

SUITES = ("thm41", "prop61", "minimizers", "etf", "taylor", "stopgrad", "example33")


def map_ordered(fn, items, workers: int = 1):
    """``list(map(fn, items))``, optionally on a thread pool; order is preserved."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _rngs(seed, n):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n)]


def random_orthogonal(rng, d):
    q, r = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(r))


def random_spd(rng, d, lo=0.2, hi=2.0):
    U = random_orthogonal(rng, d)
    return symmetrize((U * rng.uniform(lo, hi, d)) @ U.T)


def suite_thm41(trials, seed, workers=1):
    report = verify_theorem_4_1(trials, seed)
    checks = []
    for k, row in enumerate(report["rows"]):
        for kind in ("mce", "mkl"):
            checks.append(check(f"thm41/trial{k}/d{row['d']}/corrected_{kind}_rel_err",
                                row[f"corrected_{kind}_rel_err"], 0.0, 1e-9))
        if row["d"] == 1:
            for kind in ("mce", "mkl"):
                checks.append(check(f"thm41/trial{k}/d1/stated_{kind}_rel_err", row[f"stated_{kind}_rel_err"], 0.0, 1e-9))
    ref = thm41_instance(np.eye(2), 1.0)
    checks.append(check("thm41/identity2/direct_mce", ref["direct_mce"], 2.0, 1e-12))
    checks.append(check("thm41/identity2/corrected_mce", ref["corrected_mce"], ref["direct_mce"], 1e-12))
    checks.append(check("thm41/identity2/corrected_mkl", ref["corrected_mkl"], ref["direct_mkl"], 1e-12))
    table = [{k: row[k] for k in ("d", "B", "eps_sq", "direct_mce", "stated_mce", "stated_mce_abs_err",
                                  "direct_mkl", "stated_mkl", "stated_mkl_abs_err")} for row in report["rows"]]
    results = {
        "corrected_max_rel_err": report["corrected_max_rel_err"],
        "stated_form_max_rel_err_d1": report["stated_max_rel_err_d1"],
        "stated_form_min_abs_err_d_ge_2": report["stated_min_abs_err_d_ge_2"],
        "identity2": {"direct_mce": ref["direct_mce"], "corrected_mce": ref["corrected_mce"],
                      "stated_mce": ref["stated_mce"]},
        "stated_form_deviation": table,
    }
    return results, checks


def _prop61_trial(rng):
    d = int(rng.integers(1, 17))
    B = int(rng.integers(1, 4 * d + 1))
    Z = normalize_columns(rng.standard_normal((d, B)))
    C = symmetrize(Z @ Z.T / B)
    e = erank(C)
    product = e * math.exp(mkl(C, np.eye(d) / d))
    return d, B, abs(product - d) / d, abs(e - math.exp(vne(C))) / e


def suite_prop61(trials, seed, workers=1):
    rows = map_ordered(_prop61_trial, _rngs(seed, trials), workers)
    checks = []
    for k, (d, B, product_err, vne_err) in enumerate(rows):
        checks.append(check(f"prop61/trial{k}/d{d}_B{B}/erank_times_exp_mkl", product_err, 0.0, 1e-9))
        checks.append(check(f"prop61/trial{k}/d{d}_B{B}/erank_vs_exp_vne", vne_err, 0.0, 1e-9))
    results = {"trials": trials, "max_rel_err": max(max(r[2], r[3]) for r in rows)}
    return results, checks


def _minimizer_trial(rng):
    d = int(rng.integers(2, 7))
    P = random_spd(rng, d)
    Q0 = random_spd(rng, d)
    out = descend_mce_to_p(P, Q0, DescentConfig(seed=0, step_size=0.1, max_iters=5000, tol_grad_norm=1e-7))
    return d, float(np.linalg.norm(out.Q - P)), out.grad_norm, out.iterations


def tcr_random_search(d, B, samples, rng):
    """Lowest TCR over random unit-column batches, against the orthogonal frame."""
    frame = tcr_loss(orthogonal_frame(d, B), LossConfig())
    best = math.inf
    for _ in range(samples):
        best = min(best, tcr_loss(normalize_columns(rng.standard_normal((d, B))), LossConfig()))
    return frame, best


def suite_minimizers(trials, seed, workers=1, samples=10_000):
    rows = map_ordered(_minimizer_trial, _rngs(seed, trials), workers)
    checks = []
    for k, (d, dist, g, _) in enumerate(rows):
        checks.append(check(f"minimizers/mce_descent{k}/d{d}/dist_to_p", dist, 0.0, 1e-4))
        checks.append(check(f"minimizers/mce_descent{k}/d{d}/grad_norm", g, 0.0, 1e-7))
    search_rng = np.random.default_rng(np.random.SeedSequence([seed, 2]))
    results = {"mce_descent_iterations": [r[3] for r in rows], "tcr_search": {}, "tcr_descent": {}}
    for d, B in ((2, 4), (4, 8)):
        frame, best = tcr_random_search(d, B, samples, search_rng)
        results["tcr_search"][f"d{d}_B{B}"] = {"frame": frame, "best_sample": best, "margin": best - frame}
        checks.append(check(f"minimizers/tcr_search/d{d}_B{B}/frame_beaten_by", max(0.0, frame - best), 0.0, 0.0))
        Z1, Z2 = random_views(d, B, seed)
        traj = descend_matrix_ssl(Z1, Z2, LossConfig(), DescentConfig(seed=seed), loss="tcr").trajectory
        results["tcr_descent"][f"d{d}_B{B}"] = {"iterations": len(traj) - 1, "final_erank": traj[-1].erank}
        checks.append(check(f"minimizers/tcr_descent/d{d}_B{B}/dist_to_uniform", traj[-1].dist_to_uniform, 0.0, 1e-3))
    return results, checks


def suite_etf(trials, seed, workers=1):
    checks = []
    results = {}
    rng = np.random.default_rng(seed)
    for K in range(2, 9):
        for d in (K, K + 3):
            U = random_orthogonal(rng, d)[:, :K] if d > K else None
            V = build_simplex_etf(K, d, U=U)
            res = etf_erank_check(V)
            gram = V.T @ V
            off = gram[~np.eye(K, dtype=bool)]
            checks.append(check(f"etf/K{K}_d{d}/gram_erank", res.erank, K - 1, 1e-8))
            checks.append(check(f"etf/K{K}_d{d}/max_offdiag_dev", float(np.max(np.abs(off + 1.0 / (K - 1)))), 0.0, 1e-10))
            checks.append(check(f"etf/K{K}_d{d}/spectral_test", float(res.is_etf), 1.0, 0.0))
            results[f"K{K}_d{d}"] = {"erank": res.erank, "gram_residual": res.gram_residual}
        if K % 2 == 0 and K >= 4:
            # antipodal pairs of random unit vectors: zero mean and unit norm, not an ETF
            half = normalize_columns(rng.standard_normal((K, K // 2)))
            res = etf_erank_check(np.concatenate([half, -half], axis=1))
            checks.append(check(f"etf/K{K}_antipodal/spectral_test", float(res.is_etf), 0.0, 0.0))
    return results, checks


TAYLOR_RELIABLE = (0.3, 1.7)
TAYLOR_STATED = (0.1, 1.9)


def suite_taylor(trials, seed, workers=1):
    """Order-40 series against the spectral log.

    Hard checks use spectra in ``TAYLOR_RELIABLE`` where the order-40
    remainder is below 1e-6; the error over ``TAYLOR_STATED`` is reported
    alongside. At eigenvalue 0.1 the remainder is ~0.9^41/(41 * 0.1), far above 1e-6.
    """
    checks = []
    reliable = []
    stated = []
    norms = []
    for k, rng in enumerate(_rngs(seed, trials)):
        d = int(rng.integers(2, 7))
        A = random_spd(rng, d, *TAYLOR_RELIABLE)
        err = float(np.max(np.abs(matrix_log_taylor(A, 40) - matrix_log_spectral(A))))
        reliable.append(err)
        checks.append(check(f"taylor/trial{k}/d{d}/order40_vs_spectral", err, 0.0, 1e-6))
        A_wide = random_spd(rng, d, *TAYLOR_STATED)
        stated.append(float(np.max(np.abs(matrix_log_taylor(A_wide, 40) - matrix_log_spectral(A_wide)))))
        X = A_wide - np.eye(d)
        norms.append({"spectral": float(np.linalg.norm(X, 2)), "frobenius": float(np.linalg.norm(X))})
    probe = float(matrix_log_taylor(np.array([[2.0]]), 4)[0, 0])
    checks.append(check("taylor/scalar_probe/order4_log2", probe, 7.0 / 12.0, 1e-15))
    checks.append(check("taylor/scalar_probe/exact_log2", float(matrix_log_spectral(np.array([[2.0]]))[0, 0]),
                        math.log(2.0), 1e-15))
    results = {
        "reliable_range": list(TAYLOR_RELIABLE),
        "reliable_max_err": max(reliable),
        "stated_range": list(TAYLOR_STATED),
        "stated_range_max_err": max(stated),
        "stated_range_norm_condition_spectral_ok": sum(n["spectral"] < 1.0 for n in norms),
        "stated_range_norm_condition_frobenius_ok": sum(n["frobenius"] < 1.0 for n in norms),
        "scalar_probe": {"order4": probe, "exact": math.log(2.0), "gap": math.log(2.0) - probe},
    }
    return results, checks


def _stopgrad_trial(rng):
    d = int(rng.integers(2, 6))
    B = int(rng.integers(2 * d, 4 * d + 1))
    Z1 = normalize_columns(rng.standard_normal((d, B)))
    Z2 = normalize_columns(Z1 + 0.3 * rng.standard_normal((d, B)))
    cfg = LossConfig(lambda_reg=0.05)
    fd_ssl = finite_difference_gradient(lambda X: evaluate_loss("matrix-ssl", Z1, X, cfg), Z2)
    fd_kl = finite_difference_gradient(lambda X: evaluate_loss("matrix-ssl-kl", Z1, X, cfg), Z2)
    an_ssl = loss_and_grad("matrix-ssl", Z1, Z2, cfg).grad_z2
    an_kl = loss_and_grad("matrix-ssl-kl", Z1, Z2, cfg).grad_z2
    return d, B, float(np.max(np.abs(fd_ssl - fd_kl))), float(np.max(np.abs(an_ssl - an_kl)))


def suite_stopgrad(trials, seed, workers=1):
    rows = map_ordered(_stopgrad_trial, _rngs(seed, trials), workers)
    checks = []
    for k, (d, B, fd_gap, an_gap) in enumerate(rows):
        checks.append(check(f"stopgrad/trial{k}/d{d}_B{B}/fd_grad_gap", fd_gap, 0.0, 1e-8))
        checks.append(check(f"stopgrad/trial{k}/d{d}_B{B}/analytic_grad_gap", an_gap, 0.0, 1e-8))
    results = {"max_fd_gap": max(r[2] for r in rows), "max_analytic_gap": max(r[3] for r in rows)}
    return results, checks


EXAMPLE33_CASES = {
    "case1": (np.array([[1.0, 0.0], [0.0, 1.0]]), np.array([[0.8, 0.6], [0.6, 0.8]]), 2.55),
    "case2": (np.array([[1.0, 0.6], [0.0, 0.8]]), np.array([[0.8, 0.0], [0.6, 1.0]]), 0.60),
}


def example33_values(Z1, Z2) -> dict:
    """MKL of the raw Gram matrices by two routes, plus the MSE alignment."""
    B = Z1.shape[1]
    cfg = LossConfig(lambda_reg=0.0, gamma=1.0, centering=False)
    _, mce_term = alignment_terms(Z1, Z2, cfg)
    # the loss path works with (1/B) Z Z^T; MKL is 1-homogeneous so scale back by B
    via_loss = B * (mce_term - matrix_entropy(Z1 @ Z1.T / B))
    direct = mkl(Z1 @ Z1.T, Z2 @ Z2.T)
    return {"mkl_loss_path": via_loss, "mkl_direct": direct, "mse": mse_alignment(Z1, Z2)}


def suite_example33(trials, seed, workers=1):
    results = {}
    checks = []
    for name, (Z1, Z2, target) in EXAMPLE33_CASES.items():
        vals = example33_values(Z1, Z2)
        results[name] = vals
        checks.append(check(f"example33/{name}/mkl", vals["mkl_loss_path"], target, 0.01))
    return results, checks


SUITE_FUNCS = {
    "thm41": suite_thm41,
    "prop61": suite_prop61,
    "minimizers": suite_minimizers,
    "etf": suite_etf,
    "taylor": suite_taylor,
    "stopgrad": suite_stopgrad,
    "example33": suite_example33,
}


def run_suite(name: str, trials: int, seed: int, workers: int = 1):
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if name == "all":
        results, checks = {}, []
        for suite in SUITES:
            r, c = SUITE_FUNCS[suite](trials, seed, workers)
            results[suite] = r
            checks.extend(c)
        return results, checks
    try:
        fn = SUITE_FUNCS[name]
    except KeyError:
        raise ValueError(f"unknown suite {name!r}") from None
    return fn(trials, seed, workers)
