"""Gaussian input laws, quadratic-form moments, 1-D KDE and entropy.

Random numbers come from numpy's PCG64 bit generator. Every sampler takes an
explicit seed (an int or a :class:`numpy.random.SeedSequence`); there is no
module-level random state.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import ArgumentError, InsufficientDataError

KDE_GRID_POINTS = 1024
KDE_MIN_SAMPLES = 50
KDE_CUTOFF = 8.0  # kernel truncation, in bandwidths

trapezoid = getattr(np, "trapezoid", None) or np.trapz


def make_rng(seed):
    """PCG64 generator from an int or SeedSequence."""
    if isinstance(seed, np.random.Generator):
        raise ArgumentError("pass a seed, not a Generator")
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(base_seed, *key):
    """Child seed for ``key`` (a tuple of non-negative ints).

    Uses :class:`numpy.random.SeedSequence` with ``spawn_key=key``, so the
    result depends only on ``(base_seed, key)`` and not on call order.
    """
    return np.random.SeedSequence(int(base_seed), spawn_key=tuple(int(k) for k in key))


def _frozen(a):
    a = np.array(a, dtype=np.float64, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class InputDistribution:
    """Gaussian law N(mean, covariance) of the input vector."""

    mean: np.ndarray
    covariance: np.ndarray

    def __post_init__(self):
        mean = _frozen(np.atleast_1d(self.mean))
        cov = _frozen(np.atleast_2d(self.covariance))
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ArgumentError(
                f"mean of length {mean.size} does not match covariance {cov.shape}"
            )
        if not (np.all(np.isfinite(mean)) and np.all(np.isfinite(cov))):
            raise ArgumentError("non-finite moments")
        if np.max(np.abs(cov - cov.T), initial=0.0) > 1e-12:
            raise ArgumentError("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(cov)) <= 0.0:
            raise ArgumentError("covariance is not positive definite")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "covariance", cov)

    @classmethod
    def diagonal(cls, variances, mean=None):
        variances = np.asarray(variances, dtype=float)
        if mean is None:
            mean = np.zeros_like(variances)
        return cls(mean, np.diag(variances))

    @property
    def dim(self):
        return self.mean.size

    @property
    def correlation(self):
        """Second-moment matrix C + mu mu^T."""
        return self.covariance + np.outer(self.mean, self.mean)

    def sample(self, n, seed):
        return gaussian_sample(self, n, seed)


@dataclass(frozen=True, eq=False)
class Density1D:
    """Density values on a strictly increasing grid."""

    grid: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        grid = _frozen(self.grid)
        values = _frozen(self.values)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise ArgumentError("grid and values must be 1-D arrays of equal length >= 2")
        if np.any(np.diff(grid) <= 0):
            raise ArgumentError("grid must be strictly increasing")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise ArgumentError("density values must be finite and non-negative")
        mass = trapezoid(values, grid)
        if abs(mass - 1.0) > 1e-2:
            raise ArgumentError(f"density integrates to {mass:.4f}, not 1")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    def integral(self):
        return float(trapezoid(self.values, self.grid))

    def __call__(self, y):
        """Linear interpolation, zero outside the grid."""
        return np.interp(y, self.grid, self.values, left=0.0, right=0.0)


def _check_quadratic(A, dist):
    A = np.atleast_2d(np.asarray(A, dtype=float))
    m = dist.dim
    if A.shape != (m, m):
        raise ArgumentError(f"matrix of shape {A.shape} does not match input dimension {m}")
    if np.max(np.abs(A - A.T), initial=0.0) > 1e-10:
        raise ArgumentError("quadratic-form matrix is not symmetric")
    return A


def expected_quadratic_form(A, dist):
    """E[x^T A x] = tr(A C) + mu^T A mu."""
    A = _check_quadratic(A, dist)
    mu, C = dist.mean, dist.covariance
    return float(np.trace(A @ C) + mu @ A @ mu)


def variance_quadratic_form(A, dist):
    """Var[x^T A x] = 2 tr(ACAC) + 4 mu^T A C A mu for Gaussian x."""
    A = _check_quadratic(A, dist)
    mu, C = dist.mean, dist.covariance
    AC = A @ C
    return float(2.0 * np.trace(AC @ AC) + 4.0 * mu @ AC @ A @ mu)


def expected_product_quadratic_forms(A, B, dist):
    """E[(x^T A x)(x^T B x)] for Gaussian x.

    Covariance of the two forms, 2 tr(ACBC) + 4 mu^T A C B mu, plus the
    product of their means.
    """
    A = _check_quadratic(A, dist)
    B = _check_quadratic(B, dist)
    mu, C = dist.mean, dist.covariance
    cov = 2.0 * np.trace(A @ C @ B @ C) + 4.0 * mu @ A @ C @ B @ mu
    mean_a = np.trace(A @ C) + mu @ A @ mu
    mean_b = np.trace(B @ C) + mu @ B @ mu
    return float(cov + mean_a * mean_b)


def gaussian_sample(dist, n, seed):
    """``n`` draws from ``dist`` as an (n, m) array; bitwise reproducible."""
    n = int(n)
    if n < 1:
        raise ArgumentError("sample count must be >= 1")
    try:
        L = np.linalg.cholesky(dist.covariance)
    except np.linalg.LinAlgError as exc:
        raise ArgumentError("covariance is not positive definite") from exc
    z = make_rng(seed).standard_normal((n, dist.dim))
    return dist.mean + z @ L.T


def silverman_bandwidth(samples):
    samples = np.asarray(samples, dtype=float)
    return 1.06 * np.std(samples, ddof=1) * samples.size ** (-0.2)


def kde_density(samples, grid_span=6.0, n_grid=KDE_GRID_POINTS):
    """Gaussian KDE on a uniform grid over mean +/- grid_span * std.

    Bandwidth follows Silverman's rule, 1.06 * std * n**(-1/5).
    """
    samples = np.asarray(samples, dtype=float).ravel()
    if samples.size < KDE_MIN_SAMPLES:
        raise InsufficientDataError(
            f"KDE needs at least {KDE_MIN_SAMPLES} samples, got {samples.size}"
        )
    if not np.all(np.isfinite(samples)):
        raise ArgumentError("non-finite samples")
    if grid_span <= 0:
        raise ArgumentError("grid_span must be positive")
    std = np.std(samples, ddof=1)
    center = samples.mean()
    if std <= 1e-14 * max(1.0, abs(center)):
        raise InsufficientDataError("samples have no spread (zero bandwidth)")
    bw = silverman_bandwidth(samples)
    grid = np.linspace(center - grid_span * std, center + grid_span * std, n_grid)
    values = kernels.kde_on_grid(samples, grid, bw, KDE_CUTOFF)
    return Density1D(grid, values)


def entropy_1d(density):
    """Differential entropy -int p log p by the trapezoid rule (0 log 0 = 0)."""
    p = density.values
    integrand = np.zeros_like(p)
    pos = p > 0
    integrand[pos] = -p[pos] * np.log(p[pos])
    return float(trapezoid(integrand, density.grid))
