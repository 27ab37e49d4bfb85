"""Regularization-weight selection from the dual norm of the score.

A single trial draws a fresh design and response at the target theta*,
forms the noise-part score (1/n) X' omega with omega_i = E[y_i|X_i] - y_i,
and returns its dual norm.  Repeating this over many seeds gives the
distribution whose 0.95 quantile, scaled by the slack parameter beta, is
the recommended regularization weight.  The report also relates the mean
statistic to the norm-ball width: theory predicts
mean ~ xi * w(ball) / sqrt(n) with xi = 1 for isotropic designs and
sqrt(lambda_max(Sigma)) otherwise, so mean * sqrt(n) / w_hat should be
stable across dimensions.

Note the (1/n) X' omega statistic matches the score of the half-scaled
squared loss; the solver's squared loss is twice that, so pairing the
recommendation with the solver multiplies it by the loss's
grad_noise_factor (2 for squared, 1 for logistic and Poisson).
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import InputError
from .geometry import width_norm_ball
from .randomdesign import sample_design, sample_noise
from .util import substream

__all__ = ["LambdaReport", "score_dual_norm", "grad_dualnorm_trial", "lambda_report"]


def score_dual_norm(norm, X, omega):
    """Dual norm of the noise-part score (1/n) X' omega."""
    X = np.asarray(X, dtype=float)
    omega = np.asarray(omega, dtype=float)
    if X.ndim != 2 or omega.shape != (X.shape[0],):
        raise InputError(f"incompatible shapes X {X.shape}, omega {omega.shape}")
    return float(norm.dual_value(X.T @ omega / X.shape[0]))


def grad_dualnorm_trial(loss, norm, design, noise, theta_star, seed):
    """Dual norm of (1/n) X' omega for one freshly drawn (X, omega)."""
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_star.shape != (design.p,):
        raise InputError(
            f"theta_star has shape {theta_star.shape}, expected ({design.p},)"
        )
    if norm.p != design.p:
        raise InputError(f"norm dimension {norm.p} does not match design p={design.p}")
    spec = replace(design, seed=int(seed))
    X = sample_design(spec)
    if loss.kind == "squared":
        omega = sample_noise(noise, design.n, seed)
    else:
        eta = X @ theta_star
        rng = substream(seed, 6)
        response = loss.sample_response(eta, rng)
        omega = loss.mean_response(eta) - response
    return score_dual_norm(norm, X, omega)


@dataclass
class LambdaReport:
    mean_stat: float
    q95: float
    xi: float
    width_hat: float
    width_ratio: float
    recommended_lambda: float
    beta: float
    n: int
    p: int
    n_trials: int
    seed: int

    def to_dict(self):
        return {
            "mean_stat": float(self.mean_stat),
            "q95": float(self.q95),
            "xi": float(self.xi),
            "width_hat": float(self.width_hat),
            "width_ratio": float(self.width_ratio),
            "recommended_lambda": float(self.recommended_lambda),
            "beta": float(self.beta),
            "n": int(self.n),
            "p": int(self.p),
            "n_trials": int(self.n_trials),
            "seed": int(self.seed),
        }


def lambda_report(loss, norm, design, noise, theta_star, beta, n_trials, seed,
                  width_mc=20000, threads=1):
    """Monte-Carlo score statistics and the recommended regularization weight.

    recommended_lambda = beta * q95 of the trial statistic.  Trials use
    substreams derived from (seed, trial index), so the report is identical
    for any thread count.
    """
    if n_trials < 20:
        raise InputError(f"need at least 20 trials for a stable q95, got {n_trials}")
    if not beta > 1.0:
        raise InputError(f"beta must exceed 1, got {beta}")
    trial_seeds = [substream(seed, 7, i).integers(0, 2**63 - 1) for i in range(n_trials)]

    def one(i):
        return grad_dualnorm_trial(loss, norm, design, noise, theta_star, trial_seeds[i])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            stats = np.array(list(ex.map(one, range(n_trials))))
    else:
        stats = np.array([one(i) for i in range(n_trials)])

    if design.family == "gaussian-aniso":
        cov = design.covariance.matrix(design.p)
        xi = float(math.sqrt(np.max(np.linalg.eigvalsh(cov))))
    else:
        xi = 1.0
    w = width_norm_ball(norm, width_mc, substream(seed, 8).integers(0, 2**63 - 1))
    mean_stat = float(np.mean(stats))
    q95 = float(np.quantile(stats, 0.95))
    return LambdaReport(
        mean_stat=mean_stat,
        q95=q95,
        xi=xi,
        width_hat=w.mean,
        width_ratio=mean_stat * math.sqrt(design.n) / w.mean,
        recommended_lambda=beta * q95,
        beta=float(beta),
        n=design.n,
        p=design.p,
        n_trials=int(n_trials),
        seed=int(seed),
    )
