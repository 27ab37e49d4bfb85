"""Command-line interface.

Subcommands: width, re-check, rsc-glm, lambda, solve, scaling, sandwich.
Every run resolves one root seed (flag, else the NORMGEO_SEED environment
variable, else 0), derives all substreams from it, writes its primary JSON
output plus a manifest.json echoing the fully resolved configuration, and
exits 0 on success, 1 on input/usage errors, 2 on runtime failures, with a
single machine-parsable tag line on stderr for failures.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__
from .conditions import aniso_re_check, re_statistic, rip_envelope, rsc_glm_statistic
from .errors import (
    BracketError,
    DegenerateSetError,
    DimensionTooLargeError,
    InputError,
    NormgeoError,
    SolverError,
)
from .geometry import ErrorSetSpec, sample_cap, sandwich_check, width_cap, width_norm_ball
from .harness import ExperimentConfig, make_theta_star, scaling_sweep, write_sweep_outputs
from .losses import SolverConfig, glm_curvature, make_loss, solve_regularized
from .norms import GroupPartition, make_norm
from .randomdesign import CovarianceSpec, DesignSpec, NoiseSpec, sample_design
from .regparam import lambda_report
from .util import canonical_json, substream

DESIGN_CHOICES = ("gaussian-iso", "gaussian-aniso", "rademacher", "uniform")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _parse_groups(text):
    try:
        return [[int(i) for i in blk.split(",")] for blk in text.split(";")]
    except ValueError:
        raise InputError(f"cannot parse group list {text!r}; expected e.g. '0,1;2,3'") from None


def _parse_int_list(text):
    try:
        return [int(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"cannot parse integer list {text!r}") from None


def _resolve_seed(flag_value):
    if flag_value is not None:
        return int(flag_value)
    env = os.environ.get("NORMGEO_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InputError(f"NORMGEO_SEED must be an integer, got {env!r}") from None
    return 0


def _build_cli_norm(args, p):
    if args.norm == "group":
        if getattr(args, "groups", None):
            part = GroupPartition(_parse_groups(args.groups))
        elif getattr(args, "block_size", None):
            part = GroupPartition.equal_blocks(p, args.block_size)
        else:
            raise InputError("group norm needs --groups or --block-size")
        return make_norm("group", p, part)
    return make_norm(args.norm, p)


def _derived_int(root, *path):
    return int(substream(root, *path).integers(0, 2**63 - 1))


def _write_manifest(out_path, command, params, root_seed, derived, outputs):
    directory = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(directory, exist_ok=True)
    manifest = {
        "command": command,
        "params": params,
        "root_seed": int(root_seed),
        "derived_seeds": derived,
        "outputs": [os.path.basename(o) for o in outputs],
        "version": __version__,
    }
    path = os.path.join(directory, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(canonical_json(manifest))
        fh.write("\n")
    return path


def _emit(out_path, payload):
    directory = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(directory, exist_ok=True)
    text = canonical_json(payload)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(text)
        fh.write("\n")
    print(text)


def _emit_lines(out_path, payloads):
    directory = os.path.dirname(os.path.abspath(out_path))
    os.makedirs(directory, exist_ok=True)
    with open(out_path, "w", encoding="utf-8") as fh:
        for payload in payloads:
            fh.write(canonical_json(payload))
            fh.write("\n")


def cmd_width(args):
    seed = _resolve_seed(args.seed)
    norm = _build_cli_norm(args, args.p)
    est = width_norm_ball(norm, args.mc, seed)
    _emit(args.out, est.to_dict())
    _write_manifest(
        args.out, "width",
        {"norm": args.norm, "p": args.p, "mc": args.mc, "groups": getattr(args, "groups", None),
         "block_size": getattr(args, "block_size", None), "out": args.out},
        seed, {}, [args.out],
    )
    return 0


def cmd_re_check(args):
    seed = _resolve_seed(args.seed)
    n_grid = _parse_int_list(args.n_grid)
    norm = _build_cli_norm(args, args.p)
    theta = make_theta_star(norm, args.s, 1.0, _derived_int(seed, 10))
    errset = ErrorSetSpec(theta_star=theta, norm=norm, beta=args.beta)
    cap_seed = _derived_int(seed, 11)
    cap = sample_cap(errset, args.cap_dirs, cap_seed)
    width_seed = _derived_int(seed, 14)
    w_hat = width_cap(cap, args.width_mc, width_seed).mean

    cov = CovarianceSpec(kind="ar1", rho=args.rho) if args.design == "gaussian-aniso" \
        else CovarianceSpec()
    if args.design == "gaussian-aniso" and args.envelope_c is None:
        raise InputError("gaussian-aniso re-check needs --envelope-c from an isotropic fit")

    reports = []
    lines = []
    for n in n_grid:
        for s_i in range(args.seeds):
            spec = DesignSpec(n=n, p=args.p, family=args.design, covariance=cov,
                              seed=_derived_int(seed, 13, n, s_i))
            X = sample_design(spec)
            if args.design == "gaussian-aniso":
                rep = aniso_re_check(X, cap, cov.matrix(args.p), args.envelope_c,
                                     w_hat, seed=s_i)
            else:
                rep = re_statistic(X, cap, seed=s_i)
                rep.w_hat = w_hat
            reports.append(rep)
            rec = rep.to_dict()
            rec["deviation"] = rep.deviation
            lines.append(rec)

    derived = {"cap_seed": cap_seed, "width_seed": width_seed}
    if args.design != "gaussian-aniso":
        fit = rip_envelope(reports)
        lines.append({"fit": fit.to_dict()})
    _emit_lines(args.out, lines)
    print(canonical_json(lines[-1]))
    _write_manifest(
        args.out, "re-check",
        {"design": args.design, "p": args.p, "s": args.s, "n_grid": n_grid,
         "seeds": args.seeds, "beta": args.beta, "cap_dirs": args.cap_dirs,
         "width_mc": args.width_mc, "rho": args.rho, "norm": args.norm,
         "envelope_c": args.envelope_c, "out": args.out},
        seed, derived, [args.out],
    )
    return 0


def cmd_rsc_glm(args):
    seed = _resolve_seed(args.seed)
    norm = _build_cli_norm(args, args.p)
    loss = make_loss(args.loss)
    if loss.kind == "squared":
        raise InputError("rsc-glm expects a logistic or poisson loss")
    theta = make_theta_star(norm, args.s, 1.0, _derived_int(seed, 10))
    errset = ErrorSetSpec(theta_star=theta, norm=norm, beta=args.beta)
    cap_seed = _derived_int(seed, 11)
    cap = sample_cap(errset, args.cap_dirs, cap_seed)
    curv = glm_curvature(loss, args.T, psi2=args.psi2)

    lines = []
    n_positive = 0
    for s_i in range(args.seeds):
        trial_seed = _derived_int(seed, 13, args.n, s_i)
        spec = DesignSpec(n=args.n, p=args.p, family="gaussian-iso", seed=trial_seed)
        X = sample_design(spec)
        y = loss.sample_response(X @ theta, substream(trial_seed, 6))
        rep = rsc_glm_statistic(loss, X, y, theta, cap, curv)
        rep.seed = s_i
        n_positive += int(rep.passed)
        lines.append(rep.to_dict())
    summary = {
        "positive_fraction": n_positive / args.seeds,
        "curvature": curv.to_dict(),
    }
    lines.append({"summary": summary})
    _emit_lines(args.out, lines)
    print(canonical_json({"summary": summary}))
    _write_manifest(
        args.out, "rsc-glm",
        {"loss": args.loss, "p": args.p, "s": args.s, "T": args.T, "n": args.n,
         "seeds": args.seeds, "beta": args.beta, "cap_dirs": args.cap_dirs,
         "psi2": args.psi2, "norm": args.norm, "out": args.out},
        seed, {"cap_seed": cap_seed}, [args.out],
    )
    return 0


def cmd_lambda(args):
    seed = _resolve_seed(args.seed)
    norm = _build_cli_norm(args, args.p)
    loss = make_loss(args.loss)
    cov = CovarianceSpec(kind="ar1", rho=args.rho) if args.design == "gaussian-aniso" \
        else CovarianceSpec()
    design = DesignSpec(n=args.n, p=args.p, family=args.design, covariance=cov)
    noise = NoiseSpec(family="gaussian", scale=args.noise_scale)
    theta = make_theta_star(norm, args.s, 1.0, _derived_int(seed, 10))
    report_seed = _derived_int(seed, 12, args.n)
    rep = lambda_report(loss, norm, design, noise, theta, args.beta, args.trials,
                        report_seed, width_mc=args.width_mc, threads=args.threads)
    _emit(args.out, rep.to_dict())
    _write_manifest(
        args.out, "lambda",
        {"norm": args.norm, "loss": args.loss, "p": args.p, "n": args.n,
         "trials": args.trials, "beta": args.beta, "design": args.design,
         "rho": args.rho, "noise_scale": args.noise_scale, "s": args.s,
         "width_mc": args.width_mc, "threads": args.threads, "out": args.out},
        seed, {"report_seed": report_seed}, [args.out],
    )
    return 0


def cmd_solve(args):
    seed = _resolve_seed(args.seed)
    try:
        data = np.loadtxt(args.data, delimiter=",", ndmin=2)
    except (OSError, ValueError) as exc:
        raise InputError(f"cannot read data file {args.data!r}: {exc}") from None
    if data.shape[1] < 2:
        raise InputError("data file needs a response column plus at least one feature")
    y = data[:, 0]
    X = data[:, 1:]
    norm = _build_cli_norm(args, X.shape[1])
    loss = make_loss(args.loss)
    cfg = SolverConfig(max_iters=args.max_iters, rel_tol=args.rel_tol)
    fit = solve_regularized(loss, X, y, norm, args.lam, cfg)
    _emit(args.out, fit.to_dict())
    _write_manifest(
        args.out, "solve",
        {"loss": args.loss, "norm": args.norm, "lambda": args.lam, "data": args.data,
         "max_iters": args.max_iters, "rel_tol": args.rel_tol,
         "groups": getattr(args, "groups", None),
         "block_size": getattr(args, "block_size", None), "out": args.out},
        seed, {}, [args.out],
    )
    return 0


def cmd_scaling(args):
    cfg = ExperimentConfig.from_toml(args.config)
    if args.seed is not None or os.environ.get("NORMGEO_SEED") is not None:
        cfg = type(cfg)(**{**cfg.to_dict(), "seed": _resolve_seed(args.seed)})
    result = scaling_sweep(cfg, threads=args.threads)
    os.makedirs(args.out_dir, exist_ok=True)
    write_sweep_outputs(result, args.out_dir)
    summary_path = os.path.join(args.out_dir, "summary.json")
    derived = {
        "theta_seed": _derived_int(cfg.seed, 10),
        "cap_seed": _derived_int(cfg.seed, 11),
        "lambda_seeds": {str(int(n)): _derived_int(cfg.seed, 12, int(n)) for n in cfg.n_grid},
    }
    _write_manifest(
        summary_path, "scaling",
        {"config": cfg.to_dict(), "config_path": args.config,
         "out_dir": args.out_dir, "threads": args.threads},
        cfg.seed, derived, [os.path.join(args.out_dir, "trials.csv"), summary_path],
    )
    print(canonical_json(result.fit.to_dict()))
    return 0


def cmd_sandwich(args):
    seed = _resolve_seed(args.seed)
    norm = _build_cli_norm(args, args.p)
    theta = np.zeros(args.p)
    theta[0] = 1.0
    errset = ErrorSetSpec(theta_star=theta, norm=norm, beta=args.beta)
    rep = sandwich_check(errset, args.rho, args.mc, seed, n_grid=args.grid)
    _emit(args.out, rep.to_dict())
    _write_manifest(
        args.out, "sandwich",
        {"p": args.p, "norm": args.norm, "beta": args.beta, "rho": args.rho,
         "mc": args.mc, "grid": args.grid, "out": args.out},
        seed, {}, [args.out],
    )
    return 0


def _add_norm_flags(sp, default="l1"):
    sp.add_argument("--norm", default=default, choices=("l1", "l2", "linf", "group"),
                    help="regularizer kind")
    sp.add_argument("--groups", default=None,
                    help="explicit group partition, e.g. '0,1;2,3'")
    sp.add_argument("--block-size", type=int, default=None,
                    help="equal-size group shorthand")


def build_parser():
    parser = _Parser(prog="normgeo",
                     description="Norm-regularized estimation and error-set geometry tools")
    parser.add_argument("--version", action="version", version=f"normgeo {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    sp = sub.add_parser("width", help="Monte-Carlo width of a norm ball",
                        description="Estimate the Gaussian width of the unit norm ball.")
    _add_norm_flags(sp)
    sp.add_argument("--p", type=int, required=True, help="ambient dimension")
    sp.add_argument("--mc", type=int, default=10000, help="Monte-Carlo draws")
    sp.add_argument("--seed", type=int, default=None, help="root seed")
    sp.add_argument("--out", default="width.json", help="output JSON path")
    sp.set_defaults(func=cmd_width)

    sp = sub.add_parser("re-check", help="restricted eigenvalue check over an n-grid",
                        description="Restricted eigenvalue statistics of random designs "
                                    "over an error-set cap, with an envelope fit.")
    _add_norm_flags(sp)
    sp.add_argument("--design", default="gaussian-iso", choices=DESIGN_CHOICES)
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--s", type=int, required=True, help="target support size")
    sp.add_argument("--n-grid", required=True, help="comma-separated sample sizes")
    sp.add_argument("--seeds", type=int, default=10, help="trials per sample size")
    sp.add_argument("--beta", type=float, default=2.0)
    sp.add_argument("--cap-dirs", type=int, default=1000)
    sp.add_argument("--width-mc", type=int, default=20000)
    sp.add_argument("--rho", type=float, default=0.5, help="AR1 correlation (aniso only)")
    sp.add_argument("--envelope-c", type=float, default=None,
                    help="envelope constant from an isotropic fit (aniso only)")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="re.json")
    sp.set_defaults(func=cmd_re_check)

    sp = sub.add_parser("rsc-glm", help="GLM restricted curvature check",
                        description="Exact Bregman divergence of a GLM loss over a cap "
                                    "versus its truncated quadratic floor.")
    _add_norm_flags(sp)
    sp.add_argument("--loss", required=True, choices=("logistic", "poisson"))
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--s", type=int, required=True)
    sp.add_argument("--T", type=float, default=1.0, help="truncation radius")
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--seeds", type=int, default=10)
    sp.add_argument("--beta", type=float, default=2.0)
    sp.add_argument("--cap-dirs", type=int, default=1000)
    sp.add_argument("--psi2", type=float, default=1.0, help="declared sub-Gaussian norm")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="rsc.json")
    sp.set_defaults(func=cmd_rsc_glm)

    sp = sub.add_parser("lambda", help="regularization weight recommendation",
                        description="Monte-Carlo distribution of the score dual norm and "
                                    "the beta * q95 recommended weight.")
    _add_norm_flags(sp)
    sp.add_argument("--loss", default="squared", choices=("squared", "logistic", "poisson"))
    sp.add_argument("--p", type=int, required=True)
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--trials", type=int, default=200)
    sp.add_argument("--beta", type=float, default=2.0)
    sp.add_argument("--design", default="gaussian-iso", choices=DESIGN_CHOICES)
    sp.add_argument("--rho", type=float, default=0.5, help="AR1 correlation (aniso only)")
    sp.add_argument("--noise-scale", type=float, default=1.0)
    sp.add_argument("--s", type=int, default=4, help="target support size (GLM trials)")
    sp.add_argument("--width-mc", type=int, default=20000)
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="lambda.json")
    sp.set_defaults(func=cmd_lambda)

    sp = sub.add_parser("solve", help="fit one regularized GLM",
                        description="Solve loss + lambda * norm on a CSV dataset "
                                    "(first column response, rest features).")
    _add_norm_flags(sp)
    sp.add_argument("--loss", default="squared", choices=("squared", "logistic", "poisson"))
    sp.add_argument("--lambda", dest="lam", type=float, required=True,
                    help="regularization weight")
    sp.add_argument("--data", required=True, help="CSV path, no header")
    sp.add_argument("--max-iters", type=int, default=5000)
    sp.add_argument("--rel-tol", type=float, default=1e-8)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="fit.json")
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("scaling", help="recovery-error scaling sweep",
                        description="Run the configured n-grid of recovery trials and fit "
                                    "the log-log error scaling.")
    sp.add_argument("--config", required=True, help="TOML experiment config")
    sp.add_argument("--out-dir", default="scaling_out")
    sp.add_argument("--threads", type=int, default=1)
    sp.add_argument("--seed", type=int, default=None, help="override the config seed")
    sp.set_defaults(func=cmd_scaling)

    sp = sub.add_parser("sandwich", help="low-dimension width sandwich check",
                        description="Brute-force check that constrained and regularized "
                                    "cap widths sandwich as predicted (p <= 8).")
    _add_norm_flags(sp)
    sp.add_argument("--p", type=int, required=True, help="ambient dimension (at most 8)")
    sp.add_argument("--beta", type=float, default=2.0)
    sp.add_argument("--rho", type=float, default=1.0, help="cap radius")
    sp.add_argument("--mc", type=int, default=10000)
    sp.add_argument("--grid", type=int, default=2048, help="direction grid size")
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--out", default="sandwich.json")
    sp.set_defaults(func=cmd_sandwich)

    return parser


def _fail(tag, exc):
    msg = str(exc).splitlines()[0] if str(exc) else type(exc).__name__
    print(f"{tag}: {msg}", file=sys.stderr)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        _fail("E_USAGE", exc)
        return 1
    if getattr(args, "func", None) is None:
        _fail("E_USAGE", "missing subcommand (see normgeo --help)")
        return 1
    try:
        return args.func(args) or 0
    except UsageError as exc:
        _fail("E_USAGE", exc)
        return 1
    except DimensionTooLargeError as exc:
        _fail("E_DIM_TOO_LARGE", exc)
        return 1
    except InputError as exc:
        _fail("E_INPUT", exc)
        return 1
    except FileNotFoundError as exc:
        _fail("E_INPUT", exc)
        return 1
    except DegenerateSetError as exc:
        _fail("E_DEGENERATE", exc)
        return 2
    except SolverError as exc:
        _fail("E_SOLVER", exc)
        return 2
    except BracketError as exc:
        _fail("E_BRACKET", exc)
        return 2
    except NormgeoError as exc:
        _fail("E_RUNTIME", exc)
        return 2
    except Exception as exc:  # last resort: keep stderr machine-parsable
        _fail("E_RUNTIME", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
