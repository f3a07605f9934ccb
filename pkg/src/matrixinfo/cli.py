"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 parse error,
3 shape/precondition error, 4 usage error, 5 divergence.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .collapse import build_simplex_etf, collapse_report, etf_erank_check
from .errors import Diverged, MatrixInfoError, ParseError
from .fileio import check, read_embeddings, read_labels, render_report, write_embeddings
from .losses import LOSS_NAMES, LossConfig, loss_decomposition
from .optim import DescentConfig, descend_matrix_ssl, random_views
from .verify import SUITES, run_suite

EXIT_OK, EXIT_VERIFY, EXIT_PARSE, EXIT_SHAPE, EXIT_USAGE, EXIT_DIVERGED = range(6)


class UsageError(Exception):
    pass


class ShapeError(MatrixInfoError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _add_loss_flags(p):
    p.add_argument("--eps-sq", type=float, default=0.5)
    p.add_argument("--mu", type=float, default=1.0)
    p.add_argument("--lambda-reg", type=float, default=1e-3)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--taylor-order", type=int, default=4)
    p.add_argument("--log", choices=("taylor", "exact"), default="taylor")
    p.add_argument("--centering", choices=("on", "off"), default="on")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="matrixinfo", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("analyze", help="collapse metrics of an embedding file")
    p.add_argument("input")
    p.add_argument("--labels", help="sidecar label file (overrides an embedded label block)")

    p = sub.add_parser("loss", help="evaluate a loss on one or two embedding files")
    p.add_argument("name", help=", ".join(LOSS_NAMES))
    p.add_argument("z1")
    p.add_argument("z2", nargs="?", help="second view; defaults to the first")
    _add_loss_flags(p)

    p = sub.add_parser("verify", help="run a numerical check battery")
    p.add_argument("suite", choices=("all",) + SUITES)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("optimize", help="toy projected gradient descent on the sphere")
    p.add_argument("--d", type=int, default=4)
    p.add_argument("--B", type=int, default=16)
    p.add_argument("--loss", default="matrix-ssl")
    _add_loss_flags(p)
    p.add_argument("--iters", type=int, default=5000)
    p.add_argument("--step", type=float, default=0.05)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--joint", action="store_true", help="differentiate through both branches")
    p.add_argument("--backtracking", action="store_true")
    p.add_argument("--out", help="trajectory CSV path")

    p = sub.add_parser("etf", help="write a simplex ETF embedding file")
    p.add_argument("--K", type=int, required=True)
    p.add_argument("--d", type=int, required=True)
    p.add_argument("--out", help="MXE1 output path")
    return parser


def worker_count() -> int:
    raw = os.environ.get("MATRIXINFO_THREADS")
    if raw is None or raw == "":
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise UsageError(f"MATRIXINFO_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise UsageError(f"MATRIXINFO_THREADS must be a positive integer, got {raw!r}")
    return n


def _loss_config(args, stop_grad=True) -> LossConfig:
    try:
        return LossConfig(eps_sq=args.eps_sq, mu=args.mu, lambda_reg=args.lambda_reg, gamma=args.gamma,
                          taylor_order=args.taylor_order, stop_grad_branch1=stop_grad, log=args.log,
                          centering=args.centering == "on")
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _config_echo(cfg: LossConfig) -> dict:
    return {"eps_sq": cfg.eps_sq, "mu": cfg.mu, "lambda_reg": cfg.lambda_reg, "gamma": cfg.gamma,
            "taylor_order": cfg.taylor_order, "stop_grad_branch1": cfg.stop_grad_branch1,
            "log": cfg.log, "centering": cfg.centering}


def _document(command, config, results, checks=()):
    return {"tool_version": __version__, "command": command, "config": config,
            "results": results, "checks": list(checks)}


def cmd_analyze(args):
    emb = read_embeddings(args.input)
    labels = read_labels(args.labels) if args.labels else emb.labels
    if labels is not None and labels.shape[0] != emb.Z.shape[1]:
        raise ShapeError(f"{labels.shape[0]} labels for {emb.Z.shape[1]} samples")
    rep = collapse_report(emb.Z, labels)
    d, B = emb.Z.shape
    results = {
        "d": d,
        "B": B,
        "global_erank": rep.global_erank,
        "vne_global": rep.vne_global,
        "mkl_to_uniform": rep.mkl_to_uniform,
    }
    if labels is not None:
        results["intra_class_erank"] = rep.intra_class_erank
        results["inter_class_erank"] = rep.inter_class_erank
        results["per_class_eranks"] = rep.per_class_eranks
        results["collapsed_classes"] = rep.collapsed_classes
    config = {"input": args.input, "labels": args.labels}
    return _document("analyze", config, results), EXIT_OK


def cmd_loss(args):
    if args.name not in LOSS_NAMES:
        raise UsageError(f"unknown loss {args.name!r}; expected one of {', '.join(LOSS_NAMES)}")
    cfg = _loss_config(args)
    Z1 = read_embeddings(args.z1).Z
    Z2 = read_embeddings(args.z2).Z if args.z2 and args.name != "tcr" else Z1
    if Z1.shape != Z2.shape:
        raise ShapeError(f"embedding shapes {Z1.shape} and {Z2.shape} do not match")
    results = loss_decomposition(args.name, Z1, Z2, cfg)
    config = {"loss": args.name, **_config_echo(cfg)}
    return _document("loss", config, results), EXIT_OK


def cmd_verify(args):
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    results, checks = run_suite(args.suite, args.trials, args.seed, worker_count())
    passed = sum(c["pass"] for c in checks)
    results = {"passed": passed, "total": len(checks), **results}
    config = {"suite": args.suite, "trials": args.trials, "seed": args.seed}
    code = EXIT_OK if passed == len(checks) else EXIT_VERIFY
    return _document("verify", config, results, checks), code


def cmd_optimize(args):
    if args.loss not in LOSS_NAMES:
        raise UsageError(f"unknown loss {args.loss!r}; expected one of {', '.join(LOSS_NAMES)}")
    if args.d < 1 or args.B < 2:
        raise UsageError("--d must be >= 1 and --B >= 2")
    if args.iters < 0 or args.seed < 0:
        raise UsageError("--iters and --seed must be non-negative")
    cfg = _loss_config(args, stop_grad=not args.joint)
    try:
        dcfg = DescentConfig(seed=args.seed, step_size=args.step, max_iters=args.iters,
                             backtracking=args.backtracking)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    Z1, Z2 = random_views(args.d, args.B, args.seed)
    config = {"d": args.d, "B": args.B, "loss": args.loss, **_config_echo(cfg), "iters": args.iters,
              "step": args.step, "seed": args.seed, "backtracking": args.backtracking, "out": args.out}
    code = EXIT_OK
    try:
        traj = descend_matrix_ssl(Z1, Z2, cfg, dcfg, loss=args.loss).trajectory
    except Diverged as exc:
        traj = exc.trajectory
        code = EXIT_DIVERGED
    if args.out:
        Path(args.out).write_text(traj.to_csv())
    results = {"diverged": code == EXIT_DIVERGED, "records": len(traj)}
    if len(traj):
        first, last = traj[0], traj[-1]
        results.update({
            "iterations": last.iter,
            "initial_erank": first.erank,
            "final_erank": last.erank,
            "initial_loss": first.loss,
            "final_loss": last.loss,
            "final_dist_to_uniform": last.dist_to_uniform,
            "final_grad_norm": last.grad_norm,
        })
    return _document("optimize", config, results), code


def cmd_etf(args):
    V = build_simplex_etf(args.K, args.d)
    res = etf_erank_check(V)
    gram = V.T @ V
    off = gram[~np.eye(args.K, dtype=bool)]
    if args.out:
        write_embeddings(args.out, V, labels=np.arange(args.K))
    results = {"erank": res.erank, "is_etf": res.is_etf, "gram_residual": res.gram_residual,
               "gram_offdiag_min": float(off.min()), "gram_offdiag_max": float(off.max())}
    checks = [check("etf/gram_erank", res.erank, args.K - 1, 1e-8)]
    config = {"K": args.K, "d": args.d, "alpha": 1.0, "out": args.out}
    return _document("etf", config, results, checks), EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "loss": cmd_loss, "verify": cmd_verify,
            "optimize": cmd_optimize, "etf": cmd_etf}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        doc, code = COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"matrixinfo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ParseError as exc:
        print(f"matrixinfo: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"matrixinfo: cannot read input: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except Diverged as exc:
        print(f"matrixinfo: diverged at iteration {exc.iteration}", file=sys.stderr)
        return EXIT_DIVERGED
    except MatrixInfoError as exc:
        print(f"matrixinfo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SHAPE
    sys.stdout.write(render_report(doc))
    return code


if __name__ == "__main__":
    sys.exit(main())
