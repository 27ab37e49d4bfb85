"""Recovery experiments: single trials, scaling sweeps, and the error bound.

A trial draws data at a planted target, solves the regularized problem,
estimates the restricted curvature on an error-set cap augmented with the
realized error direction, and evaluates the deterministic recovery bound

    ||theta_hat - theta*||_2 <= psi * (1 + beta)/beta * lambda / kappa,

which is valid whenever lambda >= beta * dual-norm of the loss gradient at
theta* and kappa > 0.  A sweep repeats trials over an n-grid and fits the
log-log scaling of the median error.
"""

from __future__ import annotations

import math
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .conditions import re_statistic, rsc_glm_statistic
from .errors import DegenerateSetError, InputError, SolverError, UnsupportedNormError
from .geometry import CapSample, ErrorSetSpec, membership, sample_cap
from .losses import SolverConfig, glm_curvature, make_loss, solve_regularized
from .norms import GroupPartition, SupportSpec, compat_bound, make_norm
from .randomdesign import CovarianceSpec, DesignSpec, NoiseSpec, sample_design, sample_noise
from .regparam import lambda_report
from .util import LineFit, canonical_json, line_fit, substream

__all__ = [
    "ExperimentConfig",
    "TrialRecord",
    "ScalingFit",
    "SweepResult",
    "make_theta_star",
    "theoretical_bound",
    "run_recovery_trial",
    "scaling_sweep",
    "write_sweep_outputs",
]

ScalingFit = LineFit

TRIALS_CSV_HEADER = "n,seed,lambda,err_l2,kappa_hat,bound,bound_valid,iters"


@dataclass
class ExperimentConfig:
    p: int
    s: int
    norm_kind: str = "l1"
    groups: list | None = None
    block_size: int | None = None
    loss_kind: str = "squared"
    design_family: str = "gaussian-iso"
    cov_kind: str = "identity"
    cov_rho: float = 0.0
    cov_csv: str | None = None
    psi2: float = 1.0
    noise_family: str = "gaussian"
    noise_scale: float = 1.0
    magnitude: float = 1.0
    beta: float = 2.0
    n_grid: tuple = (200, 400, 800, 1600, 3200)
    n_seeds: int = 20
    lambda_fixed: float | None = None
    lambda_trials: int = 200
    max_iters: int = 5000
    rel_tol: float = 1e-8
    cap_dirs: int = 512
    lambda_width_mc: int = 20000
    glm_T: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.s < 1:
            raise InputError(f"support size must be >= 1, got {self.s}")
        if len(self.n_grid) < 1:
            raise InputError("n_grid must be nonempty")
        if self.n_seeds < 1:
            raise InputError("n_seeds must be >= 1")

    def build_norm(self):
        if self.norm_kind == "group":
            if self.groups is not None:
                part = GroupPartition(self.groups)
            elif self.block_size is not None:
                part = GroupPartition.equal_blocks(self.p, self.block_size)
            else:
                raise InputError("group norm config needs groups or block_size")
            return make_norm("group", self.p, part)
        return make_norm(self.norm_kind, self.p)

    def covariance(self):
        if self.cov_csv is not None:
            return CovarianceSpec.from_csv(self.cov_csv)
        return CovarianceSpec(kind=self.cov_kind, rho=self.cov_rho)

    def design_spec(self, n, seed=0):
        return DesignSpec(
            n=n, p=self.p, family=self.design_family,
            covariance=self.covariance(), psi2=self.psi2, seed=seed,
        )

    def noise_spec(self):
        return NoiseSpec(family=self.noise_family, scale=self.noise_scale)

    def solver_config(self):
        return SolverConfig(max_iters=self.max_iters, rel_tol=self.rel_tol)

    def support_spec(self):
        if self.norm_kind == "group":
            return SupportSpec(active_groups=self.s)
        return SupportSpec(s=self.s)

    @classmethod
    def from_toml(cls, path):
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)

        def grab(table, key, default=None):
            return raw.get(table, {}).get(key, default)

        kwargs = dict(
            p=grab("design", "p"),
            s=grab("signal", "s"),
            norm_kind=grab("norm", "kind", "l1"),
            groups=grab("norm", "groups"),
            block_size=grab("norm", "block_size"),
            loss_kind=grab("loss", "kind", "squared"),
            glm_T=grab("loss", "T", 1.0),
            design_family=grab("design", "family", "gaussian-iso"),
            cov_kind=grab("design", "cov_kind", "identity"),
            cov_rho=grab("design", "rho", 0.0),
            cov_csv=grab("design", "cov_csv"),
            psi2=grab("design", "psi2", 1.0),
            noise_family=grab("noise", "family", "gaussian"),
            noise_scale=grab("noise", "scale", 1.0),
            magnitude=grab("signal", "magnitude", 1.0),
            beta=grab("reg", "beta", 2.0),
            lambda_fixed=grab("reg", "lambda_fixed"),
            lambda_trials=grab("reg", "lambda_trials", 200),
            n_grid=tuple(grab("grid", "n", (200, 400, 800, 1600, 3200))),
            n_seeds=grab("grid", "seeds", 20),
            max_iters=grab("solver", "max_iters", 5000),
            rel_tol=grab("solver", "rel_tol", 1e-8),
            cap_dirs=grab("mc", "cap_dirs", 512),
            lambda_width_mc=grab("mc", "lambda_width_mc", 20000),
            seed=grab("run", "seed", 0),
        )
        if kwargs["p"] is None or kwargs["s"] is None:
            raise InputError("config must set [design].p and [signal].s")
        return cls(**kwargs)

    def to_dict(self):
        d = {
            "p": self.p, "s": self.s, "norm_kind": self.norm_kind,
            "block_size": self.block_size, "loss_kind": self.loss_kind,
            "design_family": self.design_family, "cov_kind": self.cov_kind,
            "cov_rho": self.cov_rho, "cov_csv": self.cov_csv, "psi2": self.psi2,
            "noise_family": self.noise_family, "noise_scale": self.noise_scale,
            "magnitude": self.magnitude, "beta": self.beta,
            "n_grid": list(self.n_grid), "n_seeds": self.n_seeds,
            "lambda_fixed": self.lambda_fixed, "lambda_trials": self.lambda_trials,
            "max_iters": self.max_iters, "rel_tol": self.rel_tol,
            "cap_dirs": self.cap_dirs, "lambda_width_mc": self.lambda_width_mc,
            "glm_T": self.glm_T, "seed": self.seed,
        }
        if self.groups is not None:
            d["groups"] = [list(g) for g in self.groups]
        return d


@dataclass
class TrialRecord:
    n: int
    seed: int
    lambda_used: float
    err_l2: float
    kappa_hat: float
    bound: float
    bound_valid: bool
    iters: int
    converged: bool = False
    in_error_set: bool | None = None
    failed: bool = False
    message: str = ""

    def csv_row(self):
        return ",".join(
            [
                str(self.n),
                str(self.seed),
                format(self.lambda_used, ".17g"),
                format(self.err_l2, ".17g"),
                format(self.kappa_hat, ".17g"),
                format(self.bound, ".17g"),
                "1" if self.bound_valid else "0",
                str(self.iters),
            ]
        )

    def to_dict(self):
        return {
            "n": self.n, "seed": self.seed, "lambda": self.lambda_used,
            "err_l2": self.err_l2, "kappa_hat": self.kappa_hat,
            "bound": self.bound, "bound_valid": self.bound_valid,
            "iters": self.iters, "converged": self.converged,
            "in_error_set": self.in_error_set, "failed": self.failed,
            "message": self.message,
        }


def make_theta_star(norm, s, magnitude, seed):
    """Signed target: +-magnitude on a random support (random active groups
    for the group norm, a random coordinate support otherwise)."""
    rng = substream(seed, 9)
    p = norm.p
    theta = np.zeros(p)
    if norm.kind == "group":
        n_groups = norm.partition.n_groups
        if s > n_groups:
            raise InputError(f"s={s} exceeds the number of groups {n_groups}")
        chosen = rng.choice(n_groups, size=s, replace=False)
        for g in chosen:
            idx = norm.partition.groups[g]
            theta[idx] = magnitude * (rng.integers(0, 2, size=idx.size) * 2.0 - 1.0)
        return theta
    if s > p:
        raise InputError(f"s={s} exceeds p={p}")
    supp = rng.choice(p, size=s, replace=False)
    theta[supp] = magnitude * (rng.integers(0, 2, size=s) * 2.0 - 1.0)
    return theta


def theoretical_bound(psi, beta, lam, kappa):
    """psi * (1 + beta)/beta * lam / kappa; +inf when kappa <= 0 (undefined)."""
    if psi <= 0:
        raise InputError(f"psi must be positive, got {psi}")
    if not beta > 1.0:
        raise InputError(f"beta must exceed 1, got {beta}")
    if lam < 0:
        raise InputError(f"lam must be nonnegative, got {lam}")
    if kappa <= 0:
        return math.inf
    return psi * (1.0 + beta) / beta * lam / kappa


def _derived_int(root, *path):
    return int(substream(root, *path).integers(0, 2**63 - 1))


def _cfg_theta_star(cfg, norm):
    return make_theta_star(norm, cfg.s, cfg.magnitude, _derived_int(cfg.seed, 10))


def _cfg_base_cap(cfg, norm, theta_star):
    errset = ErrorSetSpec(theta_star=theta_star, norm=norm, beta=cfg.beta)
    return sample_cap(errset, cfg.cap_dirs, _derived_int(cfg.seed, 11))


def _cfg_lambda(cfg, loss, norm, theta_star, n):
    if cfg.lambda_fixed is not None:
        return float(cfg.lambda_fixed)
    rep = lambda_report(
        loss, norm, cfg.design_spec(n), cfg.noise_spec(), theta_star,
        cfg.beta, cfg.lambda_trials, _derived_int(cfg.seed, 12, n),
        width_mc=cfg.lambda_width_mc,
    )
    # the report's statistic is ||(1/n) X' omega||*; rescale to this loss
    return rep.recommended_lambda * loss.grad_noise_factor


def run_recovery_trial(cfg, n, seed, lam=None, base_cap=None):
    """One draw-solve-certify cycle; returns a TrialRecord.

    Solver and sampler failures are recorded (failed=True, NaN error), not
    raised, so sweeps continue past bad trials.
    """
    norm = cfg.build_norm()
    loss = make_loss(cfg.loss_kind)
    theta_star = _cfg_theta_star(cfg, norm)
    if lam is None:
        lam = _cfg_lambda(cfg, loss, norm, theta_star, n)

    trial_seed = _derived_int(cfg.seed, 13, n, seed)
    design = cfg.design_spec(n, seed=trial_seed)
    X = sample_design(design)
    if loss.kind == "squared":
        omega = sample_noise(cfg.noise_spec(), n, trial_seed)
        y = X @ theta_star + omega
    else:
        y = loss.sample_response(X @ theta_star, substream(trial_seed, 6))

    errset = ErrorSetSpec(theta_star=theta_star, norm=norm, beta=cfg.beta)
    nan_record = dict(
        n=n, seed=seed, lambda_used=lam, err_l2=math.nan, kappa_hat=math.nan,
        bound=math.nan, bound_valid=False, iters=0, failed=True,
    )
    try:
        fit = solve_regularized(loss, X, y, norm, lam, cfg.solver_config())
    except SolverError as exc:
        return TrialRecord(**nan_record, message=f"solver: {exc}")

    delta = fit.theta - theta_star
    err = float(np.linalg.norm(delta))

    try:
        cap = base_cap if base_cap is not None else _cfg_base_cap(cfg, norm, theta_star)
    except DegenerateSetError as exc:
        return TrialRecord(**nan_record, message=f"cap: {exc}")
    dirs = cap.directions
    if err > 1e-12:
        dirs = np.vstack([delta / err, dirs])

    if loss.kind == "squared":
        kappa_hat = re_statistic(X, dirs).inf_q
    else:
        curv = glm_curvature(loss, cfg.glm_T, psi2=cfg.psi2)
        kappa_hat = rsc_glm_statistic(loss, X, y, theta_star, dirs, curv).rsc_kappa

    try:
        psi = compat_bound(norm, cfg.support_spec())
    except UnsupportedNormError:
        psi = float(np.max(norm.value_rows(dirs)))

    bound = theoretical_bound(psi, cfg.beta, lam, kappa_hat) if lam > 0 else math.inf
    grad_dual = norm.dual_value(loss.gradient(X, y, theta_star))
    lambda_ok = lam >= cfg.beta * grad_dual * (1.0 - 1e-9)
    bound_valid = bool(lambda_ok and kappa_hat > 0 and fit.converged)
    in_set = membership(errset, delta, tol=1e-6)

    return TrialRecord(
        n=n, seed=seed, lambda_used=float(lam), err_l2=err,
        kappa_hat=float(kappa_hat), bound=float(bound), bound_valid=bound_valid,
        iters=fit.n_iters, converged=fit.converged, in_error_set=in_set,
    )


@dataclass
class SweepResult:
    config: ExperimentConfig
    records: list
    fit: LineFit
    lambda_by_n: dict
    median_err_by_n: dict
    bound_valid_fraction: float
    bound_holds_fraction: float
    n_failed: int

    def summary_dict(self):
        return {
            "config": self.config.to_dict(),
            "fit": self.fit.to_dict(),
            "lambda_by_n": {str(k): v for k, v in self.lambda_by_n.items()},
            "median_err_by_n": {str(k): v for k, v in self.median_err_by_n.items()},
            "bound_valid_fraction": self.bound_valid_fraction,
            "bound_holds_fraction": self.bound_holds_fraction,
            "n_failed": self.n_failed,
        }


def scaling_sweep(cfg, threads=1, outdir=None):
    """Run the full n-grid of recovery trials and fit the error scaling.

    The fitted line is log(median err) against log(n).  Per-trial work is
    independent and seeded by (config seed, n, trial index), so results do
    not depend on the thread count.  When outdir is set, trials.csv and
    summary.json are written there.
    """
    norm = cfg.build_norm()
    loss = make_loss(cfg.loss_kind)
    theta_star = _cfg_theta_star(cfg, norm)
    base_cap = _cfg_base_cap(cfg, norm, theta_star)
    lambda_by_n = {int(n): _cfg_lambda(cfg, loss, norm, theta_star, int(n)) for n in cfg.n_grid}

    tasks = [(int(n), s) for n in cfg.n_grid for s in range(cfg.n_seeds)]

    def one(task):
        n, s = task
        return run_recovery_trial(cfg, n, s, lam=lambda_by_n[n], base_cap=base_cap)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            records = list(ex.map(one, tasks))
    else:
        records = [one(t) for t in tasks]

    med = {}
    for n in cfg.n_grid:
        errs = [r.err_l2 for r in records if r.n == n and not r.failed and r.converged]
        if errs:
            med[int(n)] = float(np.median(errs))
        else:
            warnings.warn(f"no converged trials at n={n}; dropped from the fit")
    if len(med) < 2:
        raise InputError("scaling fit needs converged trials at two or more n values")
    ns = np.array(sorted(med))
    fit = line_fit(np.log(ns), np.log([med[int(n)] for n in ns]))

    valid = [r for r in records if r.bound_valid]
    holds = [r for r in valid if r.err_l2 <= r.bound]
    result = SweepResult(
        config=cfg,
        records=records,
        fit=fit,
        lambda_by_n=lambda_by_n,
        median_err_by_n=med,
        bound_valid_fraction=len(valid) / len(records),
        bound_holds_fraction=(len(holds) / len(valid)) if valid else math.nan,
        n_failed=sum(1 for r in records if r.failed),
    )
    if outdir is not None:
        write_sweep_outputs(result, outdir)
    return result


def write_sweep_outputs(result, outdir):
    import os

    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "trials.csv")
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write(TRIALS_CSV_HEADER + "\n")
        for r in result.records:
            fh.write(r.csv_row() + "\n")
    with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8") as fh:
        fh.write(canonical_json(result.summary_dict()))
        fh.write("\n")
    return csv_path
