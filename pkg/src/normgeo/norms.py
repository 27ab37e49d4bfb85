"""Norms used as regularizers: L1, L2, L-infinity and non-overlapping group L2.

Each norm knows its value, its dual norm, a subgradient selection and its
proximal map.  The subgradient returned at a kink is always the minimal
Euclidean-norm element of the subdifferential, so ``subgradient(0) == 0``
for every kind.

Compatibility constants relate the regularizer to the Euclidean norm over
the restricted error set: ``compat_bound`` gives the analytic upper bound
(4*sqrt(s) for L1 on s-sparse targets, 4*sqrt(s_G) for group L2, exactly 1
for L2), ``compat_empirical`` measures the same ratio on sampled members of
the error set.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, UnsupportedNormError

__all__ = [
    "GroupPartition",
    "SupportSpec",
    "CompatibilityEstimate",
    "Norm",
    "L1Norm",
    "L2Norm",
    "LinfNorm",
    "GroupL2Norm",
    "make_norm",
    "compat_bound",
    "compat_empirical",
    "project_l1_ball",
]

NORM_KINDS = ("l1", "l2", "linf", "group")


class GroupPartition:
    """Non-overlapping partition of {0, ..., p-1} into index groups.

    Parameters
    ----------
    groups : sequence of sequences of int
        0-based coordinate indices.  Together the groups must cover every
        coordinate exactly once.
    """

    def __init__(self, groups):
        if not groups:
            raise InputError("partition needs at least one group")
        idx_groups = []
        for g in groups:
            arr = np.asarray(list(g), dtype=np.intp)
            if arr.size == 0:
                raise InputError("empty group in partition")
            idx_groups.append(arr)
        self.groups = idx_groups
        all_idx = np.concatenate(idx_groups)
        p = all_idx.size
        seen = np.zeros(p, dtype=bool)
        if all_idx.min() < 0 or all_idx.max() >= p:
            raise InputError("group indices must form a contiguous 0-based range")
        seen[all_idx] = True
        if not seen.all() or np.unique(all_idx).size != p:
            raise InputError("groups must partition {0,...,p-1} without overlap")
        self.p = p

    @property
    def n_groups(self):
        return len(self.groups)

    @property
    def max_group_size(self):
        return max(g.size for g in self.groups)

    @classmethod
    def equal_blocks(cls, p, block_size):
        if p % block_size != 0:
            raise InputError(f"p={p} not divisible by block size {block_size}")
        return cls([range(i, i + block_size) for i in range(0, p, block_size)])

    def to_dict(self):
        return {"groups": [g.tolist() for g in self.groups]}


@dataclass(frozen=True)
class SupportSpec:
    """Structural sparsity of a target: s nonzeros (L1) or active groups."""

    s: int | None = None
    active_groups: int | None = None


@dataclass
class CompatibilityEstimate:
    analytic_bound: float | None
    empirical_sup: float
    n_samples: int

    def to_dict(self):
        return {
            "analytic_bound": self.analytic_bound,
            "empirical_sup": self.empirical_sup,
            "n_samples": self.n_samples,
        }


class Norm:
    """Common interface; concrete kinds override the row-wise evaluators."""

    kind = None

    def __init__(self, p):
        if p < 1:
            raise InputError(f"ambient dimension must be >= 1, got {p}")
        self.p = int(p)

    def _check(self, u):
        u = np.asarray(u, dtype=float)
        if u.shape != (self.p,):
            raise InputError(f"expected vector of shape ({self.p},), got {u.shape}")
        return u

    def _check_rows(self, U):
        U = np.asarray(U, dtype=float)
        if U.ndim != 2 or U.shape[1] != self.p:
            raise InputError(f"expected rows of length {self.p}, got shape {U.shape}")
        return U

    # row-wise evaluators (vectorized over the first axis)
    def value_rows(self, U):
        raise NotImplementedError

    def dual_value_rows(self, V):
        raise NotImplementedError

    def value(self, u):
        """Norm of u (nonnegative float)."""
        return float(self.value_rows(self._check(u)[None, :])[0])

    def dual_value(self, v):
        """Dual norm of v: sup of <u, v> over the unit ball of this norm."""
        return float(self.dual_value_rows(self._check(v)[None, :])[0])

    def subgradient(self, u):
        raise NotImplementedError

    def prox(self, x, t):
        """Proximal map argmin_z 0.5*||z - x||^2 + t*R(z), t > 0."""
        raise NotImplementedError

    def _check_prox(self, x, t):
        x = self._check(x)
        t = float(t)
        if not t > 0.0:
            raise InputError(f"prox step must be positive, got {t}")
        return x, t

    def dual(self):
        """The dual norm as a Norm object (closed form for every kind)."""
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(p={self.p})"


class L1Norm(Norm):
    kind = "l1"

    def value_rows(self, U):
        return np.abs(self._check_rows(U)).sum(axis=1)

    def dual_value_rows(self, V):
        return np.abs(self._check_rows(V)).max(axis=1)

    def subgradient(self, u):
        # sign vector; 0 on zero coordinates is the minimal-norm choice
        return np.sign(self._check(u))

    def prox(self, x, t):
        x, t = self._check_prox(x, t)
        return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)

    def dual(self):
        return LinfNorm(self.p)


class L2Norm(Norm):
    kind = "l2"

    def value_rows(self, U):
        return np.sqrt(np.sum(self._check_rows(U) ** 2, axis=1))

    def dual_value_rows(self, V):
        return np.sqrt(np.sum(self._check_rows(V) ** 2, axis=1))

    def subgradient(self, u):
        u = self._check(u)
        nrm = float(np.linalg.norm(u))
        if nrm == 0.0:
            return np.zeros_like(u)
        return u / nrm

    def prox(self, x, t):
        # block soft threshold on the whole vector
        x, t = self._check_prox(x, t)
        nrm = float(np.linalg.norm(x))
        if nrm <= t:
            return np.zeros_like(x)
        return (1.0 - t / nrm) * x

    def dual(self):
        return L2Norm(self.p)


def project_l1_ball(v, radius):
    """Euclidean projection of v onto the L1 ball of the given radius."""
    v = np.asarray(v, dtype=float)
    if radius < 0:
        raise InputError(f"L1 ball radius must be nonnegative, got {radius}")
    if radius == 0.0:
        return np.zeros_like(v)
    a = np.abs(v)
    if a.sum() <= radius:
        return v.copy()
    # sort-based simplex projection of |v|
    u = np.sort(a)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, a.size + 1)
    cond = u - (css - radius) / k > 0
    rho = int(np.max(np.nonzero(cond)[0]))
    tau = (css[rho] - radius) / (rho + 1)
    return np.sign(v) * np.maximum(a - tau, 0.0)


class LinfNorm(Norm):
    kind = "linf"

    def value_rows(self, U):
        return np.abs(self._check_rows(U)).max(axis=1)

    def dual_value_rows(self, V):
        return np.abs(self._check_rows(V)).sum(axis=1)

    def subgradient(self, u):
        u = self._check(u)
        m = np.abs(u).max()
        if m == 0.0:
            return np.zeros_like(u)
        # minimal-norm element: spread weight evenly over the tied maxima
        ties = np.abs(u) == m
        g = np.zeros_like(u)
        g[ties] = np.sign(u[ties]) / ties.sum()
        return g

    def prox(self, x, t):
        # Moreau: prox of the max-norm is residual of projection onto t*B_1
        x, t = self._check_prox(x, t)
        return x - project_l1_ball(x, t)

    def dual(self):
        return L1Norm(self.p)


class GroupL2Norm(Norm):
    """Sum of Euclidean norms over the blocks of a partition."""

    kind = "group"

    def __init__(self, partition):
        if not isinstance(partition, GroupPartition):
            partition = GroupPartition(partition)
        super().__init__(partition.p)
        self.partition = partition

    def _block_norms_rows(self, U):
        out = np.empty((U.shape[0], self.partition.n_groups))
        for j, g in enumerate(self.partition.groups):
            out[:, j] = np.sqrt(np.sum(U[:, g] ** 2, axis=1))
        return out

    def value_rows(self, U):
        return self._block_norms_rows(self._check_rows(U)).sum(axis=1)

    def dual_value_rows(self, V):
        return self._block_norms_rows(self._check_rows(V)).max(axis=1)

    def subgradient(self, u):
        u = self._check(u)
        g = np.zeros_like(u)
        for idx in self.partition.groups:
            nrm = float(np.linalg.norm(u[idx]))
            if nrm > 0.0:
                g[idx] = u[idx] / nrm
        return g

    def prox(self, x, t):
        x, t = self._check_prox(x, t)
        z = np.zeros_like(x)
        for idx in self.partition.groups:
            nrm = float(np.linalg.norm(x[idx]))
            if nrm > t:
                z[idx] = (1.0 - t / nrm) * x[idx]
        return z

    def dual(self):
        return _GroupMaxNorm(self.partition)

    def __repr__(self):
        return f"GroupL2Norm(p={self.p}, n_groups={self.partition.n_groups})"


class _GroupMaxNorm(GroupL2Norm):
    """Max of block norms; dual of GroupL2Norm.  Internal helper only."""

    kind = "group_dual"

    def value_rows(self, U):
        return self._block_norms_rows(self._check_rows(U)).max(axis=1)

    def dual_value_rows(self, V):
        return self._block_norms_rows(self._check_rows(V)).sum(axis=1)

    def subgradient(self, u):
        raise UnsupportedNormError("subgradient not provided for the group-dual norm")

    def prox(self, x, t):
        raise UnsupportedNormError("prox not provided for the group-dual norm")

    def dual(self):
        return GroupL2Norm(self.partition)


def make_norm(kind, p=None, groups=None):
    """Build a norm from its config tag.

    kind is one of "l1", "l2", "linf", "group".  Group norms take their
    dimension from the partition; the others need p explicitly.
    """
    if kind == "group":
        if groups is None:
            raise InputError("group norm needs an explicit partition")
        norm = GroupL2Norm(groups)
        if p is not None and norm.p != p:
            raise InputError(f"partition covers {norm.p} coordinates, expected {p}")
        return norm
    if kind in ("l1", "l2", "linf"):
        if p is None:
            raise InputError(f"norm kind {kind!r} needs an ambient dimension p")
        cls = {"l1": L1Norm, "l2": L2Norm, "linf": LinfNorm}[kind]
        return cls(p)
    raise InputError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")


def compat_bound(norm, support):
    """Analytic upper bound on sup R(u)/||u||_2 over the restricted error set.

    Requires a decomposable kind: 4*sqrt(s) for L1, 4*sqrt(s_G) for group
    L2, exactly 1 for L2.  The max-norm has no closed form here and raises.
    """
    if norm.kind == "l2":
        return 1.0
    if norm.kind == "l1":
        if support.s is None:
            raise InputError("L1 compatibility bound needs SupportSpec.s")
        s = int(support.s)
        if not 1 <= s <= norm.p:
            raise InputError(f"sparsity s={s} out of range [1, {norm.p}]")
        return 4.0 * math.sqrt(s)
    if norm.kind == "group":
        if support.active_groups is None:
            raise InputError("group compatibility bound needs SupportSpec.active_groups")
        sg = int(support.active_groups)
        if not 1 <= sg <= norm.partition.n_groups:
            raise InputError(
                f"active group count {sg} out of range [1, {norm.partition.n_groups}]"
            )
        return 4.0 * math.sqrt(sg)
    raise UnsupportedNormError(
        f"no analytic compatibility bound for norm kind {norm.kind!r}"
    )


def compat_empirical(norm, errset, n_samples, seed):
    """Empirical sup of R(u)/||u||_2 over sampled error-set members.

    Members are drawn with the error-set cap sampler; since the ratio is
    scale invariant it is evaluated on the accepted unit directions.  The
    analytic bound is attached when the norm kind has one, else left None.
    """
    from . import geometry  # deferred: geometry depends on this module

    if n_samples < 1:
        raise InputError("n_samples must be >= 1")
    cap = geometry.sample_cap(errset, n_samples, seed)
    sup = float(np.max(norm.value_rows(cap.directions)))
    try:
        s_nonzero = int(np.count_nonzero(errset.theta_star))
        if norm.kind == "group":
            active = sum(
                1 for g in norm.partition.groups
                if np.any(errset.theta_star[g] != 0.0)
            )
            analytic = compat_bound(norm, SupportSpec(active_groups=max(active, 1)))
        else:
            analytic = compat_bound(norm, SupportSpec(s=max(s_nonzero, 1)))
    except UnsupportedNormError:
        analytic = None
    return CompatibilityEstimate(
        analytic_bound=analytic,
        empirical_sup=sup,
        n_samples=cap.directions.shape[0],
    )
