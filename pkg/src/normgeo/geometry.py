"""Error-set geometry and Monte-Carlo Gaussian widths.

The restricted error set of a target theta* under regularizer R with slack
parameter beta > 1 is

    E_r = { delta : R(theta* + delta) <= R(theta*) + R(delta) / beta },

and the constrained variant drops the slack term (beta = infinity):

    E_c = { delta : R(theta* + delta) <= R(theta*) }.

E_c is convex and contained in E_r.  Widths of spherical caps of these sets
drive sample-size requirements, so this module provides a rejection sampler
for unit directions of the sets, Monte-Carlo width estimators (for norm
balls, sampled caps and finite point sets), analytic cone-width formulas,
and a small-dimension check of the two-sided width sandwich between the
constrained and regularized sets.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateSetError,
    DimensionTooLargeError,
    InputError,
    UnsupportedNormError,
)
from .norms import Norm
from .util import substream

__all__ = [
    "ErrorSetSpec",
    "CapSample",
    "WidthEstimate",
    "SandwichReport",
    "membership",
    "sample_cap",
    "width_norm_ball",
    "width_cap",
    "width_cone_analytic",
    "width_ball_via_cone",
    "sandwich_check",
]

MEMBERSHIP_TOL = 1e-12


@dataclass
class ErrorSetSpec:
    """Restricted ("regularized") or constrained error set of a target."""

    theta_star: np.ndarray
    norm: Norm
    beta: float = 2.0
    variant: str = "regularized"

    def __post_init__(self):
        self.theta_star = np.asarray(self.theta_star, dtype=float)
        if self.theta_star.shape != (self.norm.p,):
            raise InputError(
                f"theta_star has shape {self.theta_star.shape}, expected ({self.norm.p},)"
            )
        if self.variant not in ("regularized", "constrained"):
            raise InputError(f"unknown error-set variant {self.variant!r}")
        if math.isinf(self.beta):
            self.variant = "constrained"
        elif self.variant == "regularized" and not self.beta > 1.0:
            raise InputError(f"beta must exceed 1, got {self.beta}")

    @property
    def inv_beta(self):
        """Coefficient of R(delta) on the right-hand side (0 when constrained)."""
        if self.variant == "constrained":
            return 0.0
        return 1.0 / self.beta

    def to_dict(self):
        return {
            "norm": self.norm.kind,
            "p": self.norm.p,
            "beta": None if self.variant == "constrained" else float(self.beta),
            "variant": self.variant,
        }


def membership(errset, delta, tol=MEMBERSHIP_TOL):
    """Exact evaluation of the defining inequality, with comparison tolerance."""
    R = errset.norm
    delta = np.asarray(delta, dtype=float)
    rhs = R.value(errset.theta_star) + errset.inv_beta * R.value(delta)
    lhs = R.value(errset.theta_star + delta)
    return bool(lhs <= rhs + tol * max(1.0, rhs))


@dataclass
class CapSample:
    """Unit directions u whose ray meets the error set (scaling alpha recorded)."""

    directions: np.ndarray
    alphas: np.ndarray
    seed: int
    source: str = "error_set"
    n_proposed: int = 0
    rejection_rate: float = 0.0

    @property
    def n_dirs(self):
        return int(self.directions.shape[0])


@dataclass
class WidthEstimate:
    """Monte-Carlo Gaussian width: mean over draws g of sup_a <a, g>."""

    target: str
    mean: float
    stderr: float
    n_mc: int
    seed: int

    def to_dict(self):
        return {
            "target": self.target,
            "mean": float(self.mean),
            "stderr": float(self.stderr),
            "n_mc": int(self.n_mc),
            "seed": int(self.seed),
        }


def _scale_grid(scale):
    # logarithmic grid of candidate ray scalings, 2^-10 ... 2^2 times scale
    return scale * (2.0 ** np.arange(-10, 3))


def _batch_member_scale(errset, U, tgrid):
    """Smallest grid scaling t with t*u in the error set, NaN if none."""
    R = errset.norm
    theta = errset.theta_star
    r_theta = R.value(theta)
    ru = R.value_rows(U)
    alphas = np.full(U.shape[0], np.nan)
    remaining = np.arange(U.shape[0])
    for t in tgrid:
        if remaining.size == 0:
            break
        vals = R.value_rows(theta[None, :] + t * U[remaining])
        rhs = r_theta + errset.inv_beta * t * ru[remaining]
        ok = vals <= rhs + MEMBERSHIP_TOL * np.maximum(1.0, rhs)
        alphas[remaining[ok]] = t
        remaining = remaining[~ok]
    return alphas


def _propose_structured(errset, rng, count):
    """Norm-aware proposal directions with non-vanishing acceptance."""
    R = errset.norm
    p = R.p
    theta = errset.theta_star
    ib = errset.inv_beta
    # largest off-support-to-support mass ratio compatible with the cone
    mass_ratio = (1.0 + ib) / (1.0 - ib)

    if R.kind == "l1":
        supp = np.flatnonzero(theta)
        if supp.size == 0:
            return rng.standard_normal((count, p))
        s = supp.size
        U = np.zeros((count, p))
        pick = rng.random((count, s)) < 0.5
        none = ~pick.any(axis=1)
        if none.any():
            pick[none, rng.integers(0, s, size=int(none.sum()))] = True
        mags = np.abs(rng.standard_normal((count, s))) * pick
        U[:, supp] = -np.sign(theta[supp]) * mags
        off = np.setdiff1d(np.arange(p), supp)
        if off.size:
            k_off = rng.integers(0, off.size + 1, size=count)
            order = rng.random((count, off.size)).argsort(axis=1)
            sel = order < k_off[:, None]
            offvals = rng.standard_normal((count, off.size)) * sel
            on_l1 = np.abs(U[:, supp]).sum(axis=1)
            off_l1 = np.abs(offvals).sum(axis=1)
            target = rng.uniform(0.0, mass_ratio, size=count) * on_l1
            with np.errstate(divide="ignore", invalid="ignore"):
                fac = np.where(off_l1 > 0, target / np.where(off_l1 > 0, off_l1, 1.0), 0.0)
            U[:, off] = offvals * fac[:, None]
        return U

    if R.kind == "group":
        groups = R.partition.groups
        gsel = rng.integers(0, len(groups), size=count)
        U = np.zeros((count, p))
        for j, idx in enumerate(groups):
            rows = np.flatnonzero(gsel == j)
            if rows.size:
                U[np.ix_(rows, idx)] = rng.standard_normal((rows.size, idx.size))
        return U

    if R.kind == "linf":
        signs = rng.integers(0, 2, size=(count, p)).astype(float) * 2.0 - 1.0
        return signs * np.abs(rng.standard_normal((count, p)))

    # l2 and anything else: plain isotropic proposals
    return rng.standard_normal((count, p))


def sample_cap(errset, n_dirs, seed, batch=8192, max_proposals=None):
    """Rejection-sample unit directions whose ray meets the error set.

    Proposals mix 50% uniform-sphere directions with 50% structured
    directions suited to the norm kind (sparse sign patterns for L1,
    single-group vectors for group L2).  A direction u is kept when t*u is
    a member for some t in a logarithmic grid spanning 2^-10 to 2^2 times
    ||theta*||_2; the accepting scale is recorded.  Raises
    DegenerateSetError when nothing is accepted within the proposal budget.
    """
    if n_dirs < 1:
        raise InputError(f"n_dirs must be >= 1, got {n_dirs}")
    p = errset.norm.p
    scale = float(np.linalg.norm(errset.theta_star))
    tgrid = _scale_grid(scale if scale > 0 else 1.0)
    budget = max_proposals if max_proposals is not None else max(1_000_000, 50 * n_dirs)
    rng = substream(seed, 2)

    kept_dirs = []
    kept_alphas = []
    n_prop = 0
    n_accept = 0
    while n_accept < n_dirs and n_prop < budget:
        n_uni = batch // 2
        prop = np.vstack(
            [
                rng.standard_normal((n_uni, p)),
                _propose_structured(errset, rng, batch - n_uni),
            ]
        )
        norms2 = np.linalg.norm(prop, axis=1)
        good = norms2 > 0
        prop = prop[good] / norms2[good, None]
        n_prop += batch
        alphas = _batch_member_scale(errset, prop, tgrid)
        keep = ~np.isnan(alphas)
        if keep.any():
            kept_dirs.append(prop[keep])
            kept_alphas.append(alphas[keep])
            n_accept += int(keep.sum())
        if n_accept == 0 and n_prop >= 1_000_000:
            raise DegenerateSetError(
                f"no error-set member found in {n_prop} proposals "
                f"(theta_star norm {scale:.3g}, beta inverse {errset.inv_beta:.3g})",
                n_proposed=n_prop,
            )

    if n_accept == 0:
        raise DegenerateSetError(
            f"no error-set member found in {n_prop} proposals", n_proposed=n_prop
        )
    rejection_rate = 1.0 - n_accept / n_prop
    if n_accept < n_dirs:
        warnings.warn(
            f"cap sampler returned {n_accept}/{n_dirs} directions "
            f"(rejection rate {rejection_rate:.3f})"
        )
    directions = np.vstack(kept_dirs)[:n_dirs]
    alphas = np.concatenate(kept_alphas)[:n_dirs]
    return CapSample(
        directions=directions,
        alphas=alphas,
        seed=int(seed),
        source="error_set",
        n_proposed=n_prop,
        rejection_rate=rejection_rate,
    )


def width_norm_ball(norm, n_mc, seed, chunk=16384):
    """Width of the unit ball of the norm: mean of the dual norm of g."""
    if n_mc < 1:
        raise InputError(f"n_mc must be >= 1, got {n_mc}")
    rng = substream(seed, 4)
    vals = np.empty(n_mc)
    done = 0
    while done < n_mc:
        c = min(chunk, n_mc - done)
        g = rng.standard_normal((c, norm.p))
        vals[done : done + c] = norm.dual_value_rows(g)
        done += c
    return _estimate_from(vals, f"norm_ball:{norm.kind}:p={norm.p}", seed)


def _estimate_from(vals, target, seed):
    n = vals.size
    stderr = 0.0 if n < 2 else float(np.std(vals, ddof=1) / math.sqrt(n))
    return WidthEstimate(
        target=target, mean=float(np.mean(vals)), stderr=stderr, n_mc=int(n), seed=int(seed)
    )


def _sup_inner_draws(points, n_mc, seed, stream=5):
    """Per-draw sup over a finite point set of <g, x>; used by width estimators."""
    points = np.asarray(points, dtype=float)
    if points.ndim != 2 or points.shape[0] < 1:
        raise InputError("expected a nonempty 2-d array of points")
    rng = substream(seed, stream)
    p = points.shape[1]
    k = points.shape[0]
    chunk = max(1, (1 << 22) // k)
    vals = np.empty(n_mc)
    done = 0
    while done < n_mc:
        c = min(chunk, n_mc - done)
        g = rng.standard_normal((c, p))
        vals[done : done + c] = (g @ points.T).max(axis=1)
        done += c
    return vals


def width_cap(cap, n_mc, seed):
    """Monte-Carlo width of a sampled spherical cap (finite direction set).

    The estimate is an inner approximation: adding directions can only
    increase it, and with a shared seed the increase is exact and monotone.
    """
    if n_mc < 1:
        raise InputError(f"n_mc must be >= 1, got {n_mc}")
    directions = cap.directions if hasattr(cap, "directions") else np.asarray(cap, dtype=float)
    vals = _sup_inner_draws(directions, n_mc, seed)
    return _estimate_from(vals, f"cap:k={directions.shape[0]}", seed)


def _width_finite_set(points, n_mc, seed):
    """Width of an arbitrary finite point set (not necessarily unit vectors)."""
    vals = _sup_inner_draws(points, n_mc, seed)
    return _estimate_from(vals, f"finite_set:k={np.asarray(points).shape[0]}", seed)


def width_cone_analytic(norm, support):
    """Closed-form width bound for the cap of the structured descent cone.

    L1 with s-sparse targets: sqrt(2 s log(p/s) + 5s/4); group L2 with k
    active groups out of T of max size m: sqrt(2 k (m + log(T-k)) + k);
    L2: sqrt(p).
    """
    if norm.kind == "l2":
        return math.sqrt(norm.p)
    if norm.kind == "l1":
        if support.s is None:
            raise InputError("L1 cone width needs SupportSpec.s")
        s = int(support.s)
        if not 1 <= s < norm.p:
            raise InputError(f"need 1 <= s < p, got s={s}, p={norm.p}")
        return math.sqrt(2.0 * s * math.log(norm.p / s) + 1.25 * s)
    if norm.kind == "group":
        if support.active_groups is None:
            raise InputError("group cone width needs SupportSpec.active_groups")
        k = int(support.active_groups)
        T = norm.partition.n_groups
        m = norm.partition.max_group_size
        if not 1 <= k < T:
            raise InputError(f"need 1 <= active_groups < n_groups, got {k} of {T}")
        return math.sqrt(2.0 * k * (m + math.log(T - k)) + k)
    raise UnsupportedNormError(f"no analytic cone width for norm kind {norm.kind!r}")


def width_ball_via_cone(norm):
    """Upper bound on the norm-ball width via the best single-atom cone.

    Centering the cone at a single extreme point (one coordinate for L1,
    one group for group L2) gives caps of radius 2 whose width formula,
    scaled back by the same radius, bounds the ball width:
    sqrt(2 log p + 5/4) for L1, sqrt(2 (m + log(T-1)) + 1) for group L2,
    sqrt(p) for L2.
    """
    from .norms import SupportSpec

    if norm.kind == "l2":
        return math.sqrt(norm.p)
    if norm.kind == "l1":
        if norm.p < 2:
            raise InputError("L1 ball-via-cone bound needs p >= 2")
        return width_cone_analytic(norm, SupportSpec(s=1))
    if norm.kind == "group":
        if norm.partition.n_groups < 2:
            raise InputError("group ball-via-cone bound needs at least 2 groups")
        return width_cone_analytic(norm, SupportSpec(active_groups=1))
    raise UnsupportedNormError(f"no ball-via-cone bound for norm kind {norm.kind!r}")


@dataclass
class SandwichReport:
    w_constrained: WidthEstimate
    w_regularized: WidthEstimate
    w_cone_constrained: WidthEstimate
    factor: float
    lower_ok: bool
    upper_ok: bool
    upper_margin_se: float
    n_grid: int
    holds: bool = field(init=False)

    def __post_init__(self):
        self.holds = bool(self.lower_ok and self.upper_ok)

    def to_dict(self):
        return {
            "w_constrained": self.w_constrained.to_dict(),
            "w_regularized": self.w_regularized.to_dict(),
            "w_cone_constrained": self.w_cone_constrained.to_dict(),
            "factor": float(self.factor),
            "lower_ok": self.lower_ok,
            "upper_ok": self.upper_ok,
            "upper_margin_se": float(self.upper_margin_se),
            "n_grid": int(self.n_grid),
            "holds": self.holds,
        }


def _direction_grid(p, n_grid, seed):
    if p == 2:
        ang = 2.0 * math.pi * np.arange(n_grid) / n_grid
        return np.column_stack([np.cos(ang), np.sin(ang)])
    rng = substream(seed, 3)
    g = rng.standard_normal((n_grid, p))
    nrm = np.linalg.norm(g, axis=1)
    return g[nrm > 0] / nrm[nrm > 0, None]


def _max_feasible_scales(errset, U, tvals, constrained):
    R = errset.norm
    theta = errset.theta_star
    r_theta = R.value(theta)
    ru = R.value_rows(U)
    ib = 0.0 if constrained else errset.inv_beta
    tmax = np.zeros(U.shape[0])
    for t in tvals:
        vals = R.value_rows(theta[None, :] + t * U)
        rhs = r_theta + ib * t * ru
        ok = vals <= rhs + MEMBERSHIP_TOL * np.maximum(1.0, rhs)
        tmax[ok] = np.maximum(tmax[ok], t)
    return tmax


def sandwich_check(errset, rho, n_mc, seed, n_grid=2048, n_scale=256):
    """Verify the constrained/regularized cap-width sandwich in low dimension.

    With theta* the target and beta the slack parameter, caps of radius rho
    satisfy  w(E_c cap) <= w(E_r cap) <= factor * w(cone(E_c) cap)  with
    factor = 1 + 2 ||theta*||_2 / ((beta - 1) rho).  All three widths are
    estimated with the same Gaussian draws over one shared direction grid,
    caps realized as the maximal feasible scaling of each grid direction.
    Only sound for p <= 8, where a dense grid is an adequate oracle.
    """
    p = errset.norm.p
    if p > 8:
        raise DimensionTooLargeError(
            f"sandwich check supports p <= 8, got p={p}"
        )
    if errset.variant != "regularized":
        raise InputError("sandwich check needs a regularized error set (finite beta)")
    if rho <= 0:
        raise InputError(f"cap radius rho must be positive, got {rho}")
    if n_mc < 2:
        raise InputError("sandwich check needs n_mc >= 2")

    U = _direction_grid(p, n_grid, seed)
    t_lin = rho * (np.arange(1, n_scale + 1) / n_scale)
    t_log = rho * (2.0 ** np.arange(-10, 0))
    tvals = np.unique(np.concatenate([t_log, t_lin]))

    t_r = _max_feasible_scales(errset, U, tvals, constrained=False)
    t_c = _max_feasible_scales(errset, U, tvals, constrained=True)
    # E_c is convex, so a ray is in cone(E_c) iff its smallest scaling is feasible
    in_cone = _max_feasible_scales(errset, U, tvals[:1], constrained=True) > 0
    t_cone = rho * in_cone.astype(float)

    # common Gaussian draws across the three sets
    rng = substream(seed, 5)
    k = U.shape[0]
    chunk = max(1, (1 << 22) // k)
    sC = np.empty(n_mc)
    sR = np.empty(n_mc)
    sK = np.empty(n_mc)
    done = 0
    while done < n_mc:
        c = min(chunk, n_mc - done)
        g = rng.standard_normal((c, p))
        M = g @ U.T
        sC[done : done + c] = np.maximum((M * t_c).max(axis=1), 0.0)
        sR[done : done + c] = np.maximum((M * t_r).max(axis=1), 0.0)
        sK[done : done + c] = np.maximum((M * t_cone).max(axis=1), 0.0)
        done += c

    scale = float(np.linalg.norm(errset.theta_star))
    factor = 1.0 + 2.0 * scale / ((errset.beta - 1.0) * rho)

    lower_ok = bool(np.min(sR - sC) >= -1e-12)
    d = factor * sK - sR
    d_mean = float(np.mean(d))
    d_se = float(np.std(d, ddof=1) / math.sqrt(n_mc))
    margin = d_mean / d_se if d_se > 0 else math.inf
    upper_ok = bool(d_mean >= -3.0 * d_se)

    return SandwichReport(
        w_constrained=_estimate_from(sC, "cap:constrained", seed),
        w_regularized=_estimate_from(sR, "cap:regularized", seed),
        w_cone_constrained=_estimate_from(sK, "cap:cone_constrained", seed),
        factor=factor,
        lower_ok=lower_ok,
        upper_ok=upper_ok,
        upper_margin_se=float(margin),
        n_grid=int(U.shape[0]),
    )
