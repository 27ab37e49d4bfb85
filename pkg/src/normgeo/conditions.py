"""Empirical certification of restricted eigenvalue / isometry / curvature.

Everything here works on a finite cap of unit directions: the restricted
eigenvalue statistic is the exact min and max of (1/n)||X u||^2 over the
cap, the isometry envelope fits the decay of the worst deviation from 1
against n, the anisotropic check brackets the statistic by restricted
eigenvalues of the population covariance, and the GLM statistic compares
the exact Bregman divergence of the loss with its truncated quadratic
floor.  A bisection locates the sample size where the restricted minimum
first clears a threshold.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, InputError, NormgeoError
from .randomdesign import restricted_eigs

__all__ = [
    "ConditionReport",
    "EnvelopeFit",
    "re_statistic",
    "rip_envelope",
    "aniso_re_check",
    "rsc_glm_statistic",
    "phase_transition_n0",
]


@dataclass
class ConditionReport:
    n: int
    inf_q: float
    sup_q: float
    rsc_kappa: float | None = None
    w_hat: float | None = None
    envelope_c: float | None = None
    passed: bool | None = None
    seed: int | None = None
    extra: dict | None = None

    def to_dict(self):
        d = {
            "n": int(self.n),
            "inf_q": float(self.inf_q),
            "sup_q": float(self.sup_q),
            "rsc_kappa": None if self.rsc_kappa is None else float(self.rsc_kappa),
            "w_hat": None if self.w_hat is None else float(self.w_hat),
            "envelope_c": None if self.envelope_c is None else float(self.envelope_c),
            "passed": self.passed,
            "seed": self.seed,
        }
        if self.extra:
            d.update(self.extra)
        return d

    @property
    def deviation(self):
        """Worst absolute deviation of the restricted statistic from 1."""
        return max(abs(self.inf_q - 1.0), abs(self.sup_q - 1.0))


def _directions(cap):
    u = cap.directions if hasattr(cap, "directions") else np.asarray(cap, dtype=float)
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[0] < 1:
        raise InputError("cap must provide a nonempty 2-d array of directions")
    return u


def _quad_forms(X, U, chunk=512):
    n = X.shape[0]
    out = np.empty(U.shape[0])
    for start in range(0, U.shape[0], chunk):
        block = U[start : start + chunk]
        V = X @ block.T
        out[start : start + block.shape[0]] = np.sum(V * V, axis=0) / n
    return out


def re_statistic(X, cap, seed=None):
    """Exact min and max of (1/n)||X u||^2 over the finite cap."""
    X = np.asarray(X, dtype=float)
    U = _directions(cap)
    if X.ndim != 2 or X.shape[1] != U.shape[1]:
        raise InputError(
            f"design shape {X.shape} incompatible with direction length {U.shape[1]}"
        )
    q = _quad_forms(X, U)
    inf_q = float(np.min(q))
    sup_q = float(np.max(q))
    return ConditionReport(
        n=X.shape[0], inf_q=inf_q, sup_q=sup_q, rsc_kappa=inf_q, seed=seed
    )


@dataclass
class EnvelopeFit:
    slope: float
    intercept: float
    r2: float
    c: float
    n_points: int

    def to_dict(self):
        return {
            "slope": float(self.slope),
            "intercept": float(self.intercept),
            "r2": float(self.r2),
            "c": float(self.c),
            "n_points": int(self.n_points),
        }


def rip_envelope(reports):
    """Fit the decay of the worst cap deviation from 1 against sample size.

    Reports must carry w_hat (cap width estimate).  Deviations are pooled
    by n with a median, the line is fit in log-log coordinates, and the
    envelope constant is the median of deviation * sqrt(n) / w_hat over all
    reports.  A sub-Gaussian isotropic design gives slope about -1/2.
    """
    from .util import line_fit

    if not reports:
        raise InputError("rip_envelope needs at least one report")
    for r in reports:
        if r.w_hat is None:
            raise InputError("every report needs w_hat set before envelope fitting")
    by_n = {}
    ratios = []
    for r in reports:
        dev = r.deviation
        if dev <= 0:
            warnings.warn(f"skipping report with nonpositive deviation at n={r.n}")
            continue
        by_n.setdefault(r.n, []).append(dev)
        ratios.append(dev * math.sqrt(r.n) / r.w_hat)
    if len(by_n) < 2:
        raise InputError("envelope fit needs deviations at two or more distinct n")
    ns = np.array(sorted(by_n))
    med = np.array([np.median(by_n[n]) for n in ns])
    fit = line_fit(np.log(ns), np.log(med))
    return EnvelopeFit(
        slope=fit.slope,
        intercept=fit.intercept,
        r2=fit.r2,
        c=float(np.median(ratios)),
        n_points=len(ns),
    )


def aniso_re_check(X, cap, cov, envelope_c, w_hat, seed=None):
    """Anisotropic envelope and restricted-eigenvalue bracketing.

    Checks sup_u |(u' Sigma u)^{-1} (1/n)||X u||^2 - 1| <= c * w / sqrt(n)
    for the envelope constant fitted on an isotropic run, and brackets the
    raw statistic by lambda_min(Sigma | cap) (1 - c w / sqrt(n)) from below
    and lambda_max(Sigma | cap) (1 + c w / sqrt(n)) from above.
    """
    X = np.asarray(X, dtype=float)
    U = _directions(cap)
    cov = np.asarray(cov, dtype=float)
    if envelope_c <= 0 or w_hat is None or w_hat <= 0:
        raise InputError("aniso_re_check needs positive envelope_c and w_hat")
    n = X.shape[0]
    q = _quad_forms(X, U)
    sigma_q = np.einsum("ij,jk,ik->i", U, cov, U)
    if np.min(sigma_q) <= 0:
        raise InputError("covariance is not positive on the cap")
    normalized_dev = float(np.max(np.abs(q / sigma_q - 1.0)))
    lmin, lmax = restricted_eigs(cov, U)
    slack = envelope_c * w_hat / math.sqrt(n)
    inf_q = float(np.min(q))
    sup_q = float(np.max(q))
    envelope_ok = normalized_dev <= slack
    bracket_ok = (inf_q >= lmin * (1.0 - slack)) and (sup_q <= lmax * (1.0 + slack))
    return ConditionReport(
        n=n,
        inf_q=inf_q,
        sup_q=sup_q,
        rsc_kappa=inf_q,
        w_hat=float(w_hat),
        envelope_c=float(envelope_c),
        passed=bool(envelope_ok and bracket_ok),
        seed=seed,
        extra={
            "normalized_dev": normalized_dev,
            "slack": slack,
            "lambda_min_restricted": lmin,
            "lambda_max_restricted": lmax,
            "envelope_ok": bool(envelope_ok),
            "bracket_ok": bool(bracket_ok),
        },
    )


def rsc_glm_statistic(loss, X, y, theta_star, cap, curvature, chunk=256):
    """Exact GLM Bregman divergence over the cap versus its truncated floor.

    For each cap direction u the exact divergence is
    loss(theta* + u) - loss(theta*) - <grad loss(theta*), u>, and the floor
    is (ell/n) sum_i <X_i, u>^2 1[|<X_i, theta*>| < T] 1[|<X_i, u>| < T].
    The floor never exceeds the exact divergence; that identity is asserted
    to 1e-10 for every direction.  passed means the floor infimum is
    strictly positive.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    theta_star = np.asarray(theta_star, dtype=float)
    U = _directions(cap)
    if X.shape[1] != theta_star.shape[0] or X.shape[1] != U.shape[1]:
        raise InputError("design, target and cap dimensions disagree")
    n = X.shape[0]
    T = curvature.T
    ell = curvature.ell
    eta0 = X @ theta_star
    base = float(loss.value_from_eta(eta0, y))
    g0 = loss.gradient(X, y, theta_star)
    mask0 = (np.abs(eta0) < T).astype(float)

    exact = np.empty(U.shape[0])
    floor = np.empty(U.shape[0])
    for start in range(0, U.shape[0], chunk):
        block = U[start : start + chunk]
        V = X @ block.T
        eta = eta0[:, None] + V
        vals = loss.value_from_eta(eta, y)
        exact[start : start + block.shape[0]] = vals - base - block @ g0
        trunc = (V * V) * (np.abs(V) < T) * mask0[:, None]
        floor[start : start + block.shape[0]] = ell * np.sum(trunc, axis=0) / n

    worst = float(np.min(exact - floor))
    if worst < -1e-10:
        raise NormgeoError(
            f"curvature identity violated: exact divergence below floor by {-worst:.3e}"
        )
    inf_floor = float(np.min(floor))
    return ConditionReport(
        n=n,
        inf_q=inf_floor,
        sup_q=float(np.max(exact)),
        rsc_kappa=float(np.min(exact)),
        passed=bool(inf_floor > 0.0),
        extra={"identity_margin": worst, "ell": float(ell), "T": float(T)},
    )


def phase_transition_n0(designfn, cap_builder, threshold=0.5, n_range=(8, 4096), n_seeds=10):
    """Smallest n where the median restricted minimum clears the threshold.

    designfn(n, seed) must return an n-by-p design; cap_builder() returns
    the cap once.  The median of inf_q over seeds is treated as monotone in
    n and located by bisection on integers.  Raises BracketError when the
    range endpoints do not straddle the threshold.
    """
    if not 0 < threshold < 1:
        raise InputError(f"threshold must lie in (0, 1), got {threshold}")
    lo, hi = int(n_range[0]), int(n_range[1])
    if lo < 1 or hi <= lo:
        raise InputError(f"need 1 <= lo < hi, got ({lo}, {hi})")
    cap = cap_builder()
    cache = {}

    def med(n):
        if n not in cache:
            vals = [re_statistic(designfn(n, s), cap).inf_q for s in range(n_seeds)]
            cache[n] = float(np.median(vals))
        return cache[n]

    if med(lo) >= threshold:
        raise BracketError(
            f"lower endpoint n={lo} already clears the threshold (median {med(lo):.4f})"
        )
    if med(hi) < threshold:
        raise BracketError(
            f"upper endpoint n={hi} stays below the threshold (median {med(hi):.4f})"
        )
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if med(mid) >= threshold:
            hi = mid
        else:
            lo = mid
    return hi
