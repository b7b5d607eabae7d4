"""Gaussian observation model with conjugate normal-inverse-chi-squared base.

Coordinates are modeled as independent univariate normals (diagonal
covariance); every quantity below is computed per coordinate and summed or
stacked.  The normal-inverse-gamma parameterization maps onto this one via
nu0 = 2 a, sigma0sq = b / a (see ``NixParams.from_inverse_gamma``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

__all__ = [
    "NixParams",
    "ClusterStats",
    "posterior_params",
    "sample_atom",
    "log_likelihood",
    "log_marginal",
    "gaussian_loglik_matrix",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class NixParams:
    """Normal-inverse-chi-squared hyperparameters, one value per coordinate.

    mean | variance ~ N(mu0, variance / kappa0) and
    variance ~ scaled-inv-chi2(nu0, sigma0sq).  Fields broadcast, so scalars
    are shared across coordinates.
    """

    mu0: np.ndarray
    kappa0: np.ndarray
    nu0: np.ndarray
    sigma0sq: np.ndarray

    def __post_init__(self):
        for name in ("mu0", "kappa0", "nu0", "sigma0sq"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), dtype=float)))
        for name in ("kappa0", "nu0", "sigma0sq"):
            v = getattr(self, name)
            if np.any(~np.isfinite(v)) or np.any(v <= 0):
                raise ValueError(f"{name} must be positive and finite")

    @property
    def dim(self) -> int:
        return int(
            np.broadcast_shapes(
                self.mu0.shape, self.kappa0.shape, self.nu0.shape, self.sigma0sq.shape
            )[0]
        )

    def broadcast(self, d: int) -> "NixParams":
        """Expand all fields to shape (d,)."""
        return NixParams(
            np.broadcast_to(self.mu0, (d,)).copy(),
            np.broadcast_to(self.kappa0, (d,)).copy(),
            np.broadcast_to(self.nu0, (d,)).copy(),
            np.broadcast_to(self.sigma0sq, (d,)).copy(),
        )

    @classmethod
    def from_inverse_gamma(cls, mu0, kappa0, shape, rate) -> "NixParams":
        """Equivalent parameters when variance ~ InvGamma(shape, rate)."""
        shape = np.asarray(shape, dtype=float)
        rate = np.asarray(rate, dtype=float)
        return cls(mu0, kappa0, 2.0 * shape, rate / shape)

    @classmethod
    def from_data(cls, x: np.ndarray, kappa0: float = 0.1, nu0: float = 2.0) -> "NixParams":
        """Empirical-Bayes style defaults: prior mean and scale from the data."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        mu0 = x.mean(axis=0)
        var = x.var(axis=0)
        var = np.where(var > 0, var, 1.0)
        return cls(mu0, np.full_like(mu0, kappa0), np.full_like(mu0, nu0), var)


@dataclass
class ClusterStats:
    """Sufficient statistics of one cluster: count, per-coordinate sums."""

    count: int
    sum: np.ndarray
    sumsq: np.ndarray

    @classmethod
    def empty(cls, d: int) -> "ClusterStats":
        return cls(0, np.zeros(d), np.zeros(d))

    @classmethod
    def from_data(cls, x: np.ndarray) -> "ClusterStats":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return cls(x.shape[0], x.sum(axis=0), (x * x).sum(axis=0))

    def merge(self, other: "ClusterStats") -> "ClusterStats":
        return ClusterStats(self.count + other.count, self.sum + other.sum, self.sumsq + other.sumsq)

    def add(self, x: np.ndarray) -> "ClusterStats":
        x = np.asarray(x, dtype=float)
        return ClusterStats(self.count + 1, self.sum + x, self.sumsq + x * x)


def posterior_params(prior: NixParams, stats: ClusterStats) -> NixParams:
    """Conjugate posterior hyperparameters given cluster statistics.

    With no observations the prior is returned unchanged.
    """
    n = stats.count
    if n == 0:
        return prior
    d = stats.sum.shape[0]
    p = prior.broadcast(d)
    kn = p.kappa0 + n
    mean = stats.sum / n
    mun = (p.kappa0 * p.mu0 + stats.sum) / kn
    nun = p.nu0 + n
    ss = stats.sumsq - n * mean * mean
    scale = p.nu0 * p.sigma0sq + ss + (p.kappa0 * n / kn) * (mean - p.mu0) ** 2
    return NixParams(mun, kn, nun, scale / nun)


def sample_atom(params: NixParams, rng: np.random.Generator, d: int | None = None):
    """Draw (mean, variance) per coordinate from the prior or a posterior."""
    d = params.dim if d is None else d
    p = params.broadcast(d)
    var = p.nu0 * p.sigma0sq / rng.chisquare(p.nu0, size=d)
    mean = rng.normal(p.mu0, np.sqrt(var / p.kappa0))
    return mean, var


def log_likelihood(x: np.ndarray, atom) -> float:
    """Log density of one observation under a diagonal Gaussian atom."""
    mean, var = atom
    x = np.asarray(x, dtype=float)
    return float(-0.5 * np.sum(_LOG_2PI + np.log(var) + (x - mean) ** 2 / var))


def gaussian_loglik_matrix(x: np.ndarray, means: np.ndarray, variances: np.ndarray) -> np.ndarray:
    """Log densities of n observations under H diagonal Gaussian atoms.

    x is (n, d); means and variances are (H, d); the result is (n, H).
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    resid = x[:, None, :] - means[None, :, :]
    quad = np.sum(resid * resid / variances[None, :, :], axis=2)
    const = -0.5 * (x.shape[1] * _LOG_2PI + np.sum(np.log(variances), axis=1))
    return const[None, :] - 0.5 * quad


def _log_nix_normalizer(kappa: np.ndarray, nu: np.ndarray, nu_sigma_sq: np.ndarray) -> np.ndarray:
    # log of sqrt(2 pi / kappa) * Gamma(nu/2) * (2 / (nu sigma^2))^(nu/2)
    return (
        0.5 * (_LOG_2PI - np.log(kappa))
        + gammaln(nu / 2.0)
        - (nu / 2.0) * np.log(nu_sigma_sq / 2.0)
    )


def log_marginal(stats: ClusterStats, prior: NixParams) -> float:
    """Log marginal likelihood of a cluster's data, atoms integrated out.

    Ratio of posterior to prior normalizing constants; 0 for empty stats and
    additive across coordinates.
    """
    n = stats.count
    if n == 0:
        return 0.0
    d = stats.sum.shape[0]
    p = prior.broadcast(d)
    post = posterior_params(p, stats)
    val = (
        _log_nix_normalizer(post.kappa0, post.nu0, post.nu0 * post.sigma0sq)
        - _log_nix_normalizer(p.kappa0, p.nu0, p.nu0 * p.sigma0sq)
        - 0.5 * n * _LOG_2PI
    )
    return float(val.sum())
