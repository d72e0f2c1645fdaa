"""Acquisition criteria for the next input ``h``.

Every criterion looks at the hypothetical posterior ``S' = S + phi(h) phi(h)^T``
(mean coefficients unchanged).  The trace criteria (mean model error and the
output-weighted Q) reduce to ``const + tr[S'^{-1} M]`` for a fixed symmetric
``M``; ``S'^{-1}`` is applied through Sherman-Morrison and the gradient is

    d/dphi tr[S'^{-1} M] = -2 S'^{-1} M S'^{-1} phi,

chained through the basis Jacobian for nonlinear features.

Constants that do not depend on ``h`` are dropped from the mutual-information
criteria, so their absolute values are comparable only within one criterion:

* ``mi_direct`` / ``mi_gaussian`` omit nothing beyond the input entropy, which
  cancels exactly.
* ``mi_unknown_var`` / ``mi_unknown_var_gaussian`` omit the Student-t entropy
  constants that depend only on the degrees of freedom.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np
from scipy import integrate, linalg

from . import kernels
from .errors import ArgumentError, ModeError
from .regression import (
    FeatureMoments,
    InferredVariance,
    KnownVariance,
    feature_moments,
    updated_residual_ss,
)
from .stochastics import (
    KDE_GRID_POINTS,
    InputDistribution,
    entropy_1d,
    kde_density,
    make_rng,
)

MINIMIZE = "minimize"
MAXIMIZE = "maximize"

MU_C = "mu_c"
SIGMA_C = "sigma_c"
MI_DIRECT = "mi_direct"
MI_GAUSSIAN = "mi_gaussian"
Q = "q"
MI_UNKNOWN_VAR = "mi_unknown_var"
MI_UNKNOWN_VAR_GAUSSIAN = "mi_unknown_var_gaussian"

TAGS = (MU_C, SIGMA_C, MI_DIRECT, MI_GAUSSIAN, Q, MI_UNKNOWN_VAR, MI_UNKNOWN_VAR_GAUSSIAN)
_MAXIMIZED = {MI_DIRECT, MI_GAUSSIAN, MI_UNKNOWN_VAR, MI_UNKNOWN_VAR_GAUSSIAN}
_MONTE_CARLO = _MAXIMIZED
_WITH_GRADIENT = {MU_C, Q}

MIN_MC_BUDGET = 1_000

# "exact": E[(y0 - mu)^2 (1 + c)] under Gaussian features, with the fourth
# moment E[x'Ax' x'Bx'] = 2 tr(ACBC) + tr(AC) tr(BC).
# "printed": the widely quoted variant with -c0 tr[S'^{-1} C] in place of
# +c0 tr[S'^{-1} C]; it is not an expectation of a positive integrand.
Q_FORMS = ("exact", "printed")


@dataclass(frozen=True)
class WeightMode:
    """How the Q weights are chosen: ``infinity``, ``beta`` or ``explicit``."""

    kind: str = "infinity"
    beta: float = np.inf
    p1: float = 0.0
    p2: float = 1.0
    p_lin: float = 0.0

    def __post_init__(self):
        if self.kind not in ("infinity", "beta", "explicit"):
            raise ArgumentError(f"unknown weight mode {self.kind!r}")
        if self.kind == "beta" and not self.beta > 0:
            raise ArgumentError("beta must be positive")
        if self.kind == "explicit" and not (np.isfinite(self.p1) and self.p2 >= 0):
            raise ArgumentError("explicit weights need finite p1 and p2 >= 0")

    @classmethod
    def infinity(cls):
        return cls("infinity")

    @classmethod
    def from_beta(cls, beta):
        return cls("beta", beta=float(beta))

    @classmethod
    def explicit(cls, p1, p2, p_lin=0.0):
        return cls("explicit", p1=float(p1), p2=float(p2), p_lin=float(p_lin))


class QWeights(NamedTuple):
    p1: float
    p2: float
    p_lin: float = 0.0


def _excess_integral(beta):
    """int_0^beta z^2 (exp(z^2/2) - 1) dz, free of cancellation at small beta."""
    val, _ = integrate.quad(lambda z: z * z * np.expm1(0.5 * z * z), 0.0, beta,
                            epsabs=0.0, epsrel=1e-13, limit=200)
    return val


def q_weights(sigma_y0, mode):
    """Weights (p1, p2) of the quadratic fit p1 + p2 (y - mu)^2 to 1/p_y.

    ``beta`` mode uses the least-squares fit to a Gaussian output density of
    standard deviation ``sigma_y0`` over [mu, mu + beta sigma_y0], with the
    intercept pinned at 1/p_y(mu).
    """
    if not sigma_y0 > 0:
        raise ArgumentError("sigma_y0 must be positive")
    if mode.kind == "infinity":
        return QWeights(0.0, 1.0)
    if mode.kind == "explicit":
        return QWeights(mode.p1, mode.p2, mode.p_lin)
    beta = mode.beta
    root = np.sqrt(2.0 * np.pi)
    p1 = root * sigma_y0
    # int_0^b z^2 e^{z^2/2} dz - b^3/3 == int_0^b z^2 (e^{z^2/2} - 1) dz
    p2 = 5.0 * root / (beta ** 5 * sigma_y0) * _excess_integral(beta)
    return QWeights(p1, p2)


@dataclass(frozen=True)
class CriterionSpec:
    """Which criterion, with its Monte-Carlo budget, seed and Q weights."""

    tag: str
    n_mc: int = 10_000
    seed: int = 0
    weights: Optional[WeightMode] = None
    q_form: str = "exact"
    kde_points: int = KDE_GRID_POINTS

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ArgumentError(f"unknown criterion {self.tag!r}; valid: {', '.join(TAGS)}")
        if self.kde_points < 64:
            raise ArgumentError("kde_points must be >= 64")
        if self.q_form not in Q_FORMS:
            raise ArgumentError(f"q_form must be one of {Q_FORMS}")
        if self.tag in _MONTE_CARLO and self.n_mc < MIN_MC_BUDGET:
            raise ArgumentError(f"Monte-Carlo budget must be >= {MIN_MC_BUDGET}")
        if self.tag == Q and self.weights is None:
            object.__setattr__(self, "weights", WeightMode.infinity())

    @property
    def sense(self):
        return MAXIMIZE if self.tag in _MAXIMIZED else MINIMIZE

    @property
    def has_gradient(self):
        return self.tag in _WITH_GRADIENT


class CriterionValue(NamedTuple):
    """Criterion value; ``gradient`` w.r.t. the input for MuC and Q.

    ``scale`` is the noise-variance prefactor not included in ``value``
    (Q only; 1 otherwise).
    """

    value: float
    gradient: Optional[np.ndarray] = None
    scale: float = 1.0


def _as_moments(moments, basis):
    if isinstance(moments, FeatureMoments):
        return moments
    if isinstance(moments, InputDistribution):
        if not basis.is_linear:
            raise ArgumentError("pass FeatureMoments for a nonlinear basis")
        return FeatureMoments.from_distribution(moments)
    raise ArgumentError("expected FeatureMoments or InputDistribution")


class Acquisition:
    """A criterion bound to one posterior, ready to score many candidates.

    All Monte-Carlo draws are made once here, so every candidate of a
    selection step sees the same input, coefficient and noise samples.
    """

    def __init__(self, spec, post, moments=None, input_dist=None, seed=None):
        self.spec = spec
        self.post = post
        self.basis = post.basis
        if moments is None:
            if input_dist is None:
                raise ArgumentError("need feature moments or an input distribution")
            moments = feature_moments(self.basis, input_dist, seed=spec.seed)
        self.moments = _as_moments(moments, self.basis)
        self.input_dist = input_dist
        self.seed = spec.seed if seed is None else seed
        self.s_inv = post.inverse()
        self.s_inv = 0.5 * (self.s_inv + self.s_inv.T)
        self._check_mode()
        self._offset = 0.0
        self._M = None
        self.weights = None
        if spec.tag == MU_C:
            self._M = self.moments.correlation
        elif spec.tag == Q:
            self._setup_q()
        elif spec.tag in _MONTE_CARLO:
            self._setup_samples()

    def _check_mode(self):
        tag, post = self.spec.tag, self.post
        if tag == Q and post.output_dim != 1:
            raise ModeError("the Q criterion is defined for scalar output")
        if tag in (MI_DIRECT, MI_GAUSSIAN) and not isinstance(post.noise, KnownVariance):
            raise ModeError(f"{tag} needs a known noise variance; use the unknown-variance criteria")
        if tag == MI_DIRECT and post.output_dim != 1:
            raise ModeError("direct mutual information needs scalar output (1-D KDE)")
        if tag in (MI_UNKNOWN_VAR, MI_UNKNOWN_VAR_GAUSSIAN):
            if not isinstance(post.noise, InferredVariance):
                raise ModeError(f"{tag} needs an inferred noise variance")

    def _setup_q(self):
        mu, C = self.moments.mean, self.moments.cov
        a = self.post.mean_coeffs[0]
        Ca = C @ a
        c0 = float(a @ Ca)
        sigma_y0 = np.sqrt(max(c0, 0.0))
        w = q_weights(max(sigma_y0, 1e-300), self.spec.weights)
        self.weights = w
        self.sigma_y0 = sigma_y0
        self.c0 = c0
        sign = 1.0 if self.spec.q_form == "exact" else -1.0
        M = w.p1 * (C + np.outer(mu, mu))
        M = M + w.p2 * c0 * (np.outer(mu, mu) + sign * C)
        M = M + 2.0 * w.p2 * np.outer(Ca, Ca)
        if w.p_lin:
            M = M + w.p_lin * (np.outer(Ca, mu) + np.outer(mu, Ca))
        self._M = 0.5 * (M + M.T)
        self._offset = w.p1 + w.p2 * c0

    def _setup_samples(self):
        if self.input_dist is None:
            raise ArgumentError(f"{self.spec.tag} needs the input distribution for sampling")
        n, s = self.spec.n_mc, self.basis.feature_dim
        rng = make_rng(self.seed)
        z = rng.standard_normal((n, self.input_dist.dim))
        x = self.input_dist.mean + z @ np.linalg.cholesky(self.input_dist.covariance).T
        self._phi_mc = self.basis.features(x)
        self._c_base = np.einsum("ij,jk,ik->i", self._phi_mc, self.s_inv, self._phi_mc)
        self._mean_out = self._phi_mc @ self.post.mean_coeffs.T  # (n, d)
        if self.spec.tag in (MI_DIRECT, MI_UNKNOWN_VAR, MI_UNKNOWN_VAR_GAUSSIAN):
            self._xi = rng.standard_normal((n, s))
            self._eps = rng.standard_normal(n)
        if self.spec.tag in (MI_UNKNOWN_VAR, MI_UNKNOWN_VAR_GAUSSIAN):
            shape = self.post.n_obs + 1 + self.post.noise.dof
            self._gamma = rng.standard_gamma(0.5 * shape, n)

    # -- pieces shared by several criteria ---------------------------------

    def _phi(self, h):
        return self.basis.features(np.asarray(h, dtype=float))

    def _trace(self, h, want_grad=True):
        phi = self._phi(h)
        v = self.s_inv @ phi
        denom = 1.0 + phi @ v
        M = self._M
        Mv = M @ v
        value = self._offset + np.sum(self.s_inv * M) - (v @ Mv) / denom
        if not want_grad:
            return float(value), None
        w = v / denom
        Mw = M @ w
        grad_phi = -2.0 * (self.s_inv @ Mw - v * (v @ Mw) / denom)
        grad = self.basis.jacobian(h).T @ grad_phi
        return float(value), grad

    def _s_prime_inv(self, h):
        phi = self._phi(h)
        v = self.s_inv @ phi
        return self.s_inv - np.outer(v, v) / (1.0 + phi @ v)

    def _model_error_samples(self, h):
        """c(x; h) on the shared input samples."""
        phi = self._phi(h)
        v = self.s_inv @ phi
        u = self._phi_mc @ v
        return self._c_base - u * u / (1.0 + phi @ v)

    def _mu_c_value(self, h):
        R = self.moments.correlation
        return float(np.sum(self._s_prime_inv(h) * R))

    def _predictive_draws(self, h, sigma):
        """y draws with coefficients from the hypothetical posterior."""
        phi = self._phi(h)
        L = kernels.chol_rank_one_update(self.post.chol, phi)
        Z = linalg.solve_triangular(L, self._phi_mc.T, lower=True)
        t = np.einsum("ij,ji->i", self._xi, Z)
        return self._mean_out[:, 0] + sigma * (t + self._eps)

    # -- criteria -----------------------------------------------------------

    def __call__(self, h):
        tag = self.spec.tag
        if tag == MU_C:
            return CriterionValue(*self._trace(h))
        if tag == Q:
            value, grad = self._trace(h)
            return CriterionValue(value, grad, self.post.noise_variance())
        if tag == SIGMA_C:
            A = self._s_prime_inv(h)
            mu, C = self.moments.mean, self.moments.cov
            AC = A @ C
            return CriterionValue(float(2.0 * np.sum(AC * AC.T) + 4.0 * mu @ AC @ A @ mu))
        if tag == MI_GAUSSIAN:
            return CriterionValue(self._mi_gaussian(h))
        if tag == MI_DIRECT:
            return CriterionValue(self._mi_direct(h))
        return CriterionValue(self._mi_unknown(h, tag == MI_UNKNOWN_VAR_GAUSSIAN))

    def value(self, h):
        if self.spec.has_gradient:
            return self._trace(h, want_grad=False)[0]
        return self(h).value

    def values(self, H):
        """Criterion values for the rows of ``H`` (vectorised where cheap)."""
        H = np.atleast_2d(np.asarray(H, dtype=float))
        tag = self.spec.tag
        if tag in (MU_C, Q) or (tag == MI_GAUSSIAN and self.post.output_dim == 1):
            Phi = self.basis.features(H)
            V = Phi @ self.s_inv
            denom = 1.0 + np.einsum("ij,ij->i", V, Phi)
        if tag in (MU_C, Q):
            quad = np.einsum("ij,jk,ik->i", V, self._M, V)
            return self._offset + np.sum(self.s_inv * self._M) - quad / denom
        if tag == MI_GAUSSIAN and self.post.output_dim == 1:
            R = self.moments.correlation
            mu_c = np.sum(self.s_inv * R) - np.einsum("ij,jk,ik->i", V, R, V) / denom
            var = self.post.noise.variance
            a = self.post.mean_coeffs[0]
            total = var * (1.0 + mu_c) + a @ self.moments.cov @ a
            U = self._phi_mc @ V.T
            mean_log = np.mean(np.log1p(self._c_base[:, None] - U * U / denom), axis=0)
            return 0.5 * np.log(total) - 0.5 * np.log(var) - 0.5 * mean_log
        return np.array([self(h).value for h in H])

    def _mi_gaussian(self, h):
        d = self.post.output_dim
        var = self.post.noise.variance
        a = self.post.mean_coeffs
        cov_y = var * (1.0 + self._mu_c_value(h)) * np.eye(d) + a @ self.moments.cov @ a.T
        _, logdet = np.linalg.slogdet(cov_y)
        c = self._model_error_samples(h)
        return float(0.5 * logdet - 0.5 * d * np.log(var)
                     - 0.5 * d * np.mean(np.log1p(c)))

    def _mi_direct(self, h):
        var = self.post.noise.variance
        y = self._predictive_draws(h, np.sqrt(var))
        ent = entropy_1d(kde_density(y, n_grid=self.spec.kde_points))
        c = self._model_error_samples(h)
        return float(ent - 0.5 * np.mean(np.log1p(c))
                     - 0.5 * np.log(2.0 * np.pi * np.e * var))

    def _mi_unknown(self, h, gaussian):
        post = self.post
        resid = updated_residual_ss(post, h)
        total = resid + post.noise.prior_scale
        sigma = np.sqrt(total / (2.0 * self._gamma))
        y = self._predictive_draws(h, sigma)
        if gaussian:
            ent = 0.5 * np.log(2.0 * np.pi * np.e * np.var(y))
        else:
            ent = entropy_1d(kde_density(y, n_grid=self.spec.kde_points))
        c = self._model_error_samples(h)
        return float(ent - 0.5 * np.mean(np.log1p(c)) + 0.5 * np.log(total))


def mu_c(post, moments, h):
    """Mean model error tr[S'^{-1} R] with its gradient."""
    return Acquisition(CriterionSpec(MU_C), post, moments)(h)


def sigma_c(post, moments, h):
    """Standard deviation of c(x; h) under a Gaussian input law."""
    return float(np.sqrt(Acquisition(CriterionSpec(SIGMA_C), post, moments)(h).value))


def sigma_c_squared(post, moments, h):
    return Acquisition(CriterionSpec(SIGMA_C), post, moments)(h).value


def q_criterion(post, moments, h, weights=None, q_form="exact"):
    """Output-weighted criterion Q(h) / sigma_V^2 with its gradient.

    ``weights`` is a :class:`WeightMode` or a ``(p1, p2)`` pair.
    """
    if weights is None:
        weights = WeightMode.infinity()
    elif not isinstance(weights, WeightMode):
        weights = WeightMode.explicit(*weights)
    return Acquisition(CriterionSpec(Q, weights=weights, q_form=q_form), post, moments)(h)


def mutual_info_gaussian(post, input_dist, h, spec=None, moments=None):
    spec = spec or CriterionSpec(MI_GAUSSIAN)
    return Acquisition(spec, post, moments, input_dist)(h).value


def mutual_info_direct(post, input_dist, h, spec=None, moments=None):
    spec = spec or CriterionSpec(MI_DIRECT)
    return Acquisition(spec, post, moments, input_dist)(h).value


def mutual_info_unknown_var(post, input_dist, h, spec=None, gaussian_approx=False,
                            moments=None):
    tag = MI_UNKNOWN_VAR_GAUSSIAN if gaussian_approx else MI_UNKNOWN_VAR
    if spec is None:
        spec = CriterionSpec(tag)
    elif spec.tag != tag:
        spec = CriterionSpec(tag, spec.n_mc, spec.seed)
    return Acquisition(spec, post, moments, input_dist)(h).value
