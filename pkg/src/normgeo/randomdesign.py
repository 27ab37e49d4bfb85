"""Sub-Gaussian random design matrices and noise vectors.

Rows of the design are i.i.d. mean-zero sub-Gaussian vectors.  The isotropic
families (gaussian-iso, rademacher, uniform) have identity covariance; the
uniform family is scaled to [-sqrt(3), sqrt(3)] so its variance is one.
Anisotropic rows are X_i = Sigma^{1/2} Z_i with Z_i standard Gaussian.

The sub-Gaussian constant psi2 carried by a DesignSpec is declared metadata
used by downstream theory constants; it is not estimated from samples.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InputError, NearSingularError
from .util import substream

__all__ = [
    "CovarianceSpec",
    "DesignSpec",
    "NoiseSpec",
    "sample_design",
    "sample_noise",
    "sigma_sqrt",
    "restricted_eigs",
    "ar1_matrix",
]

DESIGN_FAMILIES = ("gaussian-iso", "gaussian-aniso", "rademacher", "uniform")
NOISE_FAMILIES = ("gaussian", "rademacher", "uniform")

_ROOT3 = float(np.sqrt(3.0))


def ar1_matrix(p, rho):
    """AR(1) covariance: entry (i, j) equals rho^|i-j|."""
    if not -1.0 < rho < 1.0:
        raise InputError(f"AR(1) correlation must lie in (-1, 1), got {rho}")
    idx = np.arange(p)
    return rho ** np.abs(idx[:, None] - idx[None, :])


@dataclass
class CovarianceSpec:
    """Covariance model: identity, ar1 (with rho) or an explicit matrix."""

    kind: str = "identity"
    rho: float = 0.0
    explicit: np.ndarray | None = None

    def matrix(self, p):
        if self.kind == "identity":
            return np.eye(p)
        if self.kind == "ar1":
            return ar1_matrix(p, self.rho)
        if self.kind == "explicit":
            if self.explicit is None:
                raise InputError("explicit covariance requested but no matrix given")
            m = np.asarray(self.explicit, dtype=float)
            if m.shape != (p, p):
                raise InputError(f"explicit covariance has shape {m.shape}, expected ({p}, {p})")
            if not np.allclose(m, m.T, atol=1e-10 * max(1.0, float(np.abs(m).max()))):
                raise InputError("explicit covariance must be symmetric")
            return m
        raise InputError(f"unknown covariance kind {self.kind!r}")

    @classmethod
    def from_csv(cls, path):
        # row-major, header-free CSV
        m = np.loadtxt(path, delimiter=",", ndmin=2)
        return cls(kind="explicit", explicit=m)

    def to_dict(self):
        d = {"kind": self.kind}
        if self.kind == "ar1":
            d["rho"] = float(self.rho)
        if self.kind == "explicit" and self.explicit is not None:
            d["shape"] = list(np.asarray(self.explicit).shape)
        return d


@dataclass
class DesignSpec:
    n: int
    p: int
    family: str = "gaussian-iso"
    covariance: CovarianceSpec = field(default_factory=CovarianceSpec)
    psi2: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.family not in DESIGN_FAMILIES:
            raise InputError(
                f"unknown design family {self.family!r}; expected one of {DESIGN_FAMILIES}"
            )
        if self.n < 1 or self.p < 1:
            raise InputError(f"design needs n >= 1 and p >= 1, got n={self.n}, p={self.p}")
        if self.family != "gaussian-aniso" and self.covariance.kind != "identity":
            raise InputError(
                "non-identity covariance is only supported for the gaussian-aniso family"
            )
        if self.psi2 <= 0:
            raise InputError(f"psi2 must be positive, got {self.psi2}")

    def to_dict(self):
        return {
            "n": int(self.n),
            "p": int(self.p),
            "family": self.family,
            "covariance": self.covariance.to_dict(),
            "psi2": float(self.psi2),
            "seed": int(self.seed),
        }


@dataclass
class NoiseSpec:
    family: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.family not in NOISE_FAMILIES:
            raise InputError(
                f"unknown noise family {self.family!r}; expected one of {NOISE_FAMILIES}"
            )
        if self.scale < 0:
            raise InputError(f"noise scale must be nonnegative, got {self.scale}")

    def to_dict(self):
        return {"family": self.family, "scale": float(self.scale)}


def sigma_sqrt(cov):
    """Symmetric PSD square root via eigendecomposition.

    Raises NearSingularError if any eigenvalue is at or below 1e-12.  The
    returned S satisfies ||S @ S - cov||_F <= 1e-10 ||cov||_F.
    """
    cov = np.asarray(cov, dtype=float)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1]:
        raise InputError(f"covariance must be square, got shape {cov.shape}")
    w, v = np.linalg.eigh(cov)
    if np.min(w) <= 1e-12:
        raise NearSingularError(
            f"covariance is near singular: smallest eigenvalue {np.min(w):.3e} <= 1e-12"
        )
    s = (v * np.sqrt(w)) @ v.T
    err = np.linalg.norm(s @ s - cov) / max(np.linalg.norm(cov), 1e-300)
    if err > 1e-10:
        raise NearSingularError(f"square-root reconstruction error {err:.3e} exceeds 1e-10")
    return s


def sample_design(spec):
    """Draw the n-by-p design matrix for a DesignSpec (seeded)."""
    rng = substream(spec.seed, 0)
    n, p = spec.n, spec.p
    if spec.family == "gaussian-iso":
        return rng.standard_normal((n, p))
    if spec.family == "gaussian-aniso":
        s = sigma_sqrt(spec.covariance.matrix(p))
        return rng.standard_normal((n, p)) @ s
    if spec.family == "rademacher":
        return rng.integers(0, 2, size=(n, p)).astype(float) * 2.0 - 1.0
    # uniform on [-sqrt(3), sqrt(3)]: unit variance
    return rng.uniform(-_ROOT3, _ROOT3, size=(n, p))


def sample_noise(spec, n, seed):
    """Draw n i.i.d. noise entries with standard deviation spec.scale."""
    if n < 1:
        raise InputError(f"noise vector length must be >= 1, got {n}")
    rng = substream(seed, 1)
    if spec.family == "gaussian":
        return spec.scale * rng.standard_normal(n)
    if spec.family == "rademacher":
        return spec.scale * (rng.integers(0, 2, size=n).astype(float) * 2.0 - 1.0)
    return rng.uniform(-_ROOT3 * spec.scale, _ROOT3 * spec.scale, size=n)


def _as_directions(cap):
    if hasattr(cap, "directions"):
        return np.asarray(cap.directions, dtype=float)
    arr = np.asarray(cap, dtype=float)
    if arr.ndim != 2:
        raise InputError("expected a CapSample or a 2-d array of directions")
    return arr


def restricted_eigs(cov, cap):
    """Min and max of u' Sigma u over the cap directions."""
    cov = np.asarray(cov, dtype=float)
    u = _as_directions(cap)
    if u.shape[1] != cov.shape[0]:
        raise InputError(
            f"direction length {u.shape[1]} does not match covariance size {cov.shape[0]}"
        )
    q = np.einsum("ij,jk,ik->i", u, cov, u)
    return float(np.min(q)), float(np.max(q))
