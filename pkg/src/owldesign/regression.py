"""Conjugate Bayesian regression on a fixed feature basis.

The coefficient prior is zero-mean with precision ``alpha * I`` (relative to
the noise variance), so the posterior is summarised by

    S_xx = Phi^T Phi + alpha I,   S_yx = Y^T Phi,   mean = S_yx S_xx^{-1}

with ``Phi`` the (N, s) feature matrix.  With an unknown noise variance an
inverse-gamma prior

    p(sigma^2) ~ sigma^{-2 (1 + dof/2)} exp(-prior_scale / (2 sigma^2))

is placed on it; scalar output only.
"""

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import linalg, special, stats

from . import kernels
from .errors import ArgumentError, ConvergenceError, ModeError
from .stochastics import gaussian_sample

DEFAULT_ALPHA = 0.1

# (i, j) -> z1**i * z2**j; the five-term cubic basis of the nonlinear systems.
# The z1 z2 term is even, so this basis is not odd in z.
ODD_CUBIC_2D = ((0, 1), (1, 0), (1, 1), (0, 3), (3, 0))


@dataclass(frozen=True)
class BasisSpec:
    """Feature map phi: R^m -> R^s.

    ``kind`` is ``"linear"`` (phi(z) = z) or ``"monomials"`` with one
    exponent tuple of length ``input_dim`` per feature.
    """

    kind: str
    input_dim: int
    exponents: tuple = ()

    def __post_init__(self):
        if self.kind == "linear":
            if self.exponents:
                raise ArgumentError("linear basis takes no exponents")
        elif self.kind == "monomials":
            exps = tuple(tuple(int(e) for e in row) for row in self.exponents)
            if not exps:
                raise ArgumentError("monomial basis needs at least one exponent tuple")
            if any(len(row) != self.input_dim for row in exps):
                raise ArgumentError("exponent tuples must have length input_dim")
            if any(e < 0 for row in exps for e in row):
                raise ArgumentError("exponents must be non-negative integers")
            object.__setattr__(self, "exponents", exps)
            object.__setattr__(self, "_exp", np.asarray(exps, dtype=float))
        else:
            raise ArgumentError(f"unknown basis kind {self.kind!r}")
        if self.input_dim < 1:
            raise ArgumentError("input_dim must be >= 1")

    @classmethod
    def linear(cls, input_dim):
        return cls("linear", int(input_dim))

    @classmethod
    def monomials(cls, exponents):
        exponents = tuple(tuple(row) for row in exponents)
        return cls("monomials", len(exponents[0]), exponents)

    @property
    def feature_dim(self):
        return self.input_dim if self.kind == "linear" else len(self.exponents)

    @property
    def is_linear(self):
        return self.kind == "linear"

    def features(self, z):
        """phi(z) for one point (shape (m,)) or a batch (shape (n, m))."""
        z = np.asarray(z, dtype=float)
        if z.shape[-1] != self.input_dim:
            raise ArgumentError(f"expected inputs of dimension {self.input_dim}")
        if self.is_linear:
            return z.copy()
        return np.prod(z[..., None, :] ** self._exp, axis=-1)

    def jacobian(self, z):
        """d phi_j / d z_k as an (s, m) matrix at a single point."""
        z = np.asarray(z, dtype=float)
        if self.is_linear:
            return np.eye(self.input_dim)
        E = self._exp
        powers = z ** E
        deriv = np.where(E > 0, E * z ** np.maximum(E - 1.0, 0.0), 0.0)
        # J[j, k] = deriv[j, k] * prod_{l != k} powers[j, l]
        eye = np.eye(self.input_dim, dtype=bool)
        return np.prod(np.where(eye, deriv[:, None, :], powers[:, None, :]), axis=-1)


@dataclass(frozen=True)
class KnownVariance:
    variance: float

    def __post_init__(self):
        if not self.variance > 0:
            raise ArgumentError("noise variance must be positive")


@dataclass(frozen=True)
class InferredVariance:
    """Inverse-gamma prior on the noise variance (scale, degrees of freedom)."""

    prior_scale: float
    dof: float

    def __post_init__(self):
        if not (self.prior_scale > 0 and self.dof > 0):
            raise ArgumentError("prior_scale and dof must be positive")


class NoisePosterior(NamedTuple):
    """Inverse-gamma posterior of the noise variance.

    Density proportional to sigma^{-2 (1 + shape/2)} exp(-scale / (2 sigma^2)),
    i.e. scipy's ``invgamma(shape / 2, scale=scale / 2)``.
    """

    shape: float
    scale: float

    def mean(self):
        if self.shape <= 2:
            return np.inf
        return self.scale / (self.shape - 2.0)

    def to_scipy(self):
        return stats.invgamma(self.shape / 2.0, scale=self.scale / 2.0)


@dataclass(frozen=True, eq=False)
class RegressionPosterior:
    basis: BasisSpec
    alpha: float
    noise: object
    s_xx: np.ndarray
    s_yx: np.ndarray
    sum_yy: np.ndarray
    n_obs: int
    chol: np.ndarray = field(repr=False)
    mean_coeffs: np.ndarray = field(repr=False)

    @property
    def output_dim(self):
        return self.s_yx.shape[0]

    @property
    def feature_dim(self):
        return self.s_xx.shape[0]

    def solve(self, b):
        """S_xx^{-1} b."""
        return linalg.cho_solve((self.chol, True), b)

    def inverse(self):
        return self.solve(np.eye(self.feature_dim))

    def residual_ss(self):
        """sum_yy - S_yx S_xx^{-1} S_yx^T / (1 + alpha); a scalar for d = 1."""
        r = self.sum_yy - self.s_yx @ self.solve(self.s_yx.T) / (1.0 + self.alpha)
        return float(r[0, 0]) if self.output_dim == 1 else r

    def noise_variance(self):
        """Known noise variance, or the posterior mean when it is inferred."""
        if isinstance(self.noise, KnownVariance):
            return self.noise.variance
        post = noise_variance_posterior(self)
        if post.shape > 2:
            return post.mean()
        return post.scale / (post.shape + 2.0)  # posterior mode

    def mean_model(self, z):
        """Mean prediction at one point or a batch; shape (d,) or (n, d)."""
        return self.basis.features(z) @ self.mean_coeffs.T


def _posterior_from_stats(basis, alpha, noise, s_xx, s_yx, sum_yy, n_obs, chol=None,
                          mean=None):
    if chol is None:
        try:
            chol = np.linalg.cholesky(s_xx)
        except np.linalg.LinAlgError as exc:
            raise ArgumentError("S_xx is not positive definite") from exc
    if mean is None:
        mean = linalg.cho_solve((chol, True), s_yx.T).T
    else:
        mean = np.array(mean)
    for a in (s_xx, s_yx, sum_yy, chol, mean):
        a.setflags(write=False)
    return RegressionPosterior(basis, float(alpha), noise, s_xx, s_yx, sum_yy,
                               int(n_obs), chol, mean)


def _as_outputs(Y, n):
    Y = np.asarray(Y, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.ndim != 2 or Y.shape[0] != n:
        raise ArgumentError(f"expected {n} output rows, got shape {Y.shape}")
    return Y


def fit(X, Y, basis, alpha=DEFAULT_ALPHA, noise=None, output_dim=1):
    """Posterior from data ``X`` (N, m) and outputs ``Y`` (N,) or (N, d).

    ``N = 0`` is allowed and gives the prior; ``output_dim`` fixes d then.
    """
    if not alpha > 0:
        raise ArgumentError("alpha must be positive")
    if noise is None:
        raise ArgumentError("a noise model is required")
    X = np.asarray(X, dtype=float).reshape(-1, basis.input_dim)
    n = X.shape[0]
    if n == 0 and np.size(Y) == 0:
        Y = np.zeros((0, output_dim))
    Y = _as_outputs(Y, n)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ArgumentError("non-finite data")
    if isinstance(noise, InferredVariance) and Y.shape[1] != 1:
        raise ModeError("inferred noise variance supports scalar output only")
    Phi = basis.features(X)
    s = basis.feature_dim
    s_xx = Phi.T @ Phi + alpha * np.eye(s)
    s_xx = 0.5 * (s_xx + s_xx.T)
    s_yx = Y.T @ Phi
    sum_yy = Y.T @ Y
    return _posterior_from_stats(basis, alpha, noise, s_xx, s_yx, sum_yy, n)


class PredictiveDistribution(NamedTuple):
    """Predictive law of y at one input.

    ``scale`` is the variance for the Gaussian family and the squared scale
    parameter for the Student-t family.
    """

    mean: np.ndarray
    scale: object
    c: float
    family: str
    dof: float = np.inf

    def _frozen_scipy(self):
        if self.family == "gaussian":
            return stats.norm(loc=float(self.mean[0]), scale=np.sqrt(float(self.scale)))
        return stats.t(self.dof, loc=float(self.mean[0]), scale=np.sqrt(float(self.scale)))

    def pdf(self, y):
        if self.mean.size != 1:
            raise ModeError("pdf is available for scalar output only")
        return self._frozen_scipy().pdf(y)

    def variance(self):
        if self.family == "gaussian":
            return self.scale
        if self.dof <= 2:
            return np.inf
        return self.scale * self.dof / (self.dof - 2.0)


def model_error_c(post, x):
    """c(x) = phi(x)^T S_xx^{-1} phi(x) at one point or for each row of a batch."""
    phi = post.basis.features(x)
    w = linalg.solve_triangular(post.chol, phi.T, lower=True)
    if phi.ndim == 1:
        return float(w @ w)
    return np.einsum("ij,ij->j", w, w)


def predict(post, x):
    c = model_error_c(post, x)
    mean = post.mean_coeffs @ post.basis.features(x)
    if isinstance(post.noise, KnownVariance):
        var = post.noise.variance * (1.0 + c)
        scale = var if post.output_dim == 1 else var * np.eye(post.output_dim)
        return PredictiveDistribution(mean, scale, c, "gaussian")
    dof = post.n_obs + post.noise.dof + 1.0
    total = post.residual_ss() + post.noise.prior_scale
    return PredictiveDistribution(mean, total * (1.0 + c) / dof, c, "student_t", dof)


def hypothetical_update(post, h):
    """Posterior after adding input ``h`` with the mean-model output.

    The pseudo-output ``mean_coeffs @ phi(h)`` leaves the mean coefficients
    unchanged, so they are carried over rather than re-solved (a re-solve
    would only add rounding of order cond(S_xx) * eps).  The Cholesky
    factor is refreshed by a rank-one update.
    """
    h = np.asarray(h, dtype=float)
    if not np.all(np.isfinite(h)):
        raise ArgumentError("non-finite candidate")
    phi = post.basis.features(h)
    y0 = post.mean_coeffs @ phi
    s_xx = post.s_xx + np.outer(phi, phi)
    s_yx = post.s_yx + np.outer(y0, phi)
    sum_yy = post.sum_yy + np.outer(y0, y0)
    chol = kernels.chol_rank_one_update(post.chol, phi)
    return _posterior_from_stats(post.basis, post.alpha, post.noise, s_xx, s_yx,
                                 sum_yy, post.n_obs + 1, chol, post.mean_coeffs)


def updated_residual_ss(post, h):
    """Residual statistic after a hypothetical sample at ``h``.

    Closed form sigma^2_{Y|X} + alpha / (1 + alpha) * (mean . phi(h))^2.
    """
    if post.output_dim != 1:
        raise ModeError("scalar output only")
    y0 = float(post.mean_coeffs[0] @ post.basis.features(h))
    return post.residual_ss() + post.alpha / (1.0 + post.alpha) * y0 * y0


def noise_variance_posterior(post):
    if not isinstance(post.noise, InferredVariance):
        raise ModeError("noise variance is known; there is no posterior")
    if post.output_dim != 1:
        raise ModeError("scalar output only")
    return NoisePosterior(post.n_obs + post.noise.dof,
                          post.residual_ss() + post.noise.prior_scale)


class EmpiricalBayesResult(NamedTuple):
    alpha: float
    dof: float
    posterior: RegressionPosterior
    iterations: int
    history: list


def evidence_fixed_point_map(X, Y, basis, alpha, dof, prior_variance=1.0):
    """One undamped sweep of the evidence fixed-point equations.

    Returns ``(alpha_new, dof_new, sigma_hat_sq)``.  The inverse-gamma scale
    is tied to the degrees of freedom as ``dof * prior_variance``.
    """
    post = fit(X, Y, basis, alpha, InferredVariance(dof * prior_variance, dof))
    n = post.n_obs
    m = basis.feature_dim
    rss = post.residual_ss()
    sig2 = (rss + dof * prior_variance) / (n + dof)
    q = float(post.s_yx[0] @ post.s_xx @ post.s_yx[0])
    alpha_new = m / (q / sig2 - m)
    num = special.digamma(0.5 * (n + dof)) - special.digamma(0.5 * dof)
    den = np.log(rss / (dof * prior_variance) + 1.0) + prior_variance / sig2 - 1.0
    dof_new = dof * num / den
    return alpha_new, dof_new, sig2


def empirical_bayes_fit(X, Y, basis, prior_variance=1.0, init=(DEFAULT_ALPHA, 1.0),
                        max_iter=200, rtol=1e-8, damping=0.5):
    """Choose (alpha, dof) by maximising the evidence.

    Iterates the fixed-point map with 50/50 damping until the largest
    relative change is below ``rtol``.  Raises :class:`ConvergenceError`
    when an iterate leaves the positive orthant or ``max_iter`` is hit.
    """
    X = np.asarray(X, dtype=float).reshape(-1, basis.input_dim)
    Y = _as_outputs(Y, X.shape[0])
    if Y.shape[1] != 1:
        raise ModeError("scalar output only")
    if X.shape[0] < 2:
        raise ArgumentError("empirical Bayes needs at least two observations")
    alpha, dof = float(init[0]), float(init[1])
    history = [(alpha, dof)]
    for it in range(1, max_iter + 1):
        alpha_new, dof_new, _ = evidence_fixed_point_map(X, Y, basis, alpha, dof,
                                                         prior_variance)
        if not (np.isfinite(alpha_new) and np.isfinite(dof_new)
                and alpha_new > 0 and dof_new > 0):
            history.append((alpha_new, dof_new))
            raise ConvergenceError(
                f"evidence iteration left the admissible region at step {it}", history
            )
        a_next = (1.0 - damping) * alpha_new + damping * alpha
        d_next = (1.0 - damping) * dof_new + damping * dof
        change = max(abs(a_next - alpha) / alpha, abs(d_next - dof) / dof)
        alpha, dof = a_next, d_next
        history.append((alpha, dof))
        if change < rtol:
            post = fit(X, Y, basis, alpha, InferredVariance(dof * prior_variance, dof))
            return EmpiricalBayesResult(alpha, dof, post, it, history)
    raise ConvergenceError(f"no convergence within {max_iter} iterations", history)


class FeatureMoments(NamedTuple):
    """Mean and covariance of phi(z) under the input law."""

    mean: np.ndarray
    cov: np.ndarray

    @property
    def correlation(self):
        return self.cov + np.outer(self.mean, self.mean)

    @classmethod
    def from_distribution(cls, dist):
        return cls(np.array(dist.mean), np.array(dist.covariance))


def basis_moments(basis, input_dist, n_mc, seed):
    """Monte-Carlo mean and covariance of the features."""
    if n_mc < 10_000:
        raise ArgumentError("basis_moments needs n_mc >= 1e4")
    Phi = basis.features(gaussian_sample(input_dist, n_mc, seed))
    mean = Phi.mean(axis=0)
    cov = np.cov(Phi, rowvar=False).reshape(basis.feature_dim, basis.feature_dim)
    return FeatureMoments(mean, 0.5 * (cov + cov.T))


def feature_moments(basis, input_dist, n_mc=100_000, seed=0):
    """Exact moments for the linear basis, Monte-Carlo otherwise."""
    if basis.is_linear:
        return FeatureMoments.from_distribution(input_dist)
    return basis_moments(basis, input_dist, n_mc, seed)
