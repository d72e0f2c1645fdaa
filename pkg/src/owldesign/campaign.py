"""Sequential design campaigns and their ensembles.

One repeat: draw the initial samples, then for each step fit the posterior,
optimize the acquisition criterion over the admissible set, query the system
at the chosen input and record the error of the updated model.

Random streams are keyed by (repeat, stream, step) through
:func:`owldesign.stochastics.derive_seed`, so a repeat's numbers never depend
on which other repeats ran or in what order.
"""

import math
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np

from . import benchmarks
from .criteria import (
    MAXIMIZE,
    MI_DIRECT,
    MI_GAUSSIAN,
    MI_UNKNOWN_VAR,
    MI_UNKNOWN_VAR_GAUSSIAN,
    MU_C,
    Q,
    Acquisition,
    CriterionSpec,
    WeightMode,
)
from .errors import ArgumentError, ConvergenceError
from .optimizer import (
    AngleGrid,
    Disk,
    UnitSphere,
    canonical_sign,
    optimize_disk,
    optimize_grid,
    optimize_sphere,
)
from .regression import (
    InferredVariance,
    KnownVariance,
    empirical_bayes_fit,
    feature_moments,
    fit,
    model_error_c,
)
from .stochastics import derive_seed, gaussian_sample, kde_density, make_rng

MONTE_CARLO = "monte_carlo"
STRATEGIES = (
    MONTE_CARLO, "mu_c", "q_inf", "q_beta<b>", "q_<p1>",
    MI_DIRECT, MI_GAUSSIAN, MI_UNKNOWN_VAR, MI_UNKNOWN_VAR_GAUSSIAN,
)
PDF_FLOOR = 1e-12

# seed streams
_INIT, _NOISE, _CRIT, _START, _MC_INPUT = range(5)
_SHARED_REPEAT = 2 ** 31 - 1  # repeat slot for draws shared by all repeats
_MOMENTS, _VARIANCE, _PDF = range(3)


def strategy_spec(name, n_mc=10_000, seed=0, q_form="exact", kde_points=1024):
    """CriterionSpec for a strategy name, or None for the Monte-Carlo baseline.

    Names: ``monte_carlo``, ``mu_c``, ``q_inf``, ``q_beta<b>`` (e.g.
    ``q_beta2``), ``q_<p1>`` (explicit p1 with p2 = 1, e.g. ``q_0.01``) and
    the mutual-information tags.
    """
    if name == MONTE_CARLO:
        return None
    if name in (MU_C, MI_DIRECT, MI_GAUSSIAN, MI_UNKNOWN_VAR, MI_UNKNOWN_VAR_GAUSSIAN):
        return CriterionSpec(name, n_mc=n_mc, seed=seed, kde_points=kde_points)
    if name == "q_inf":
        weights = WeightMode.infinity()
    elif m := re.fullmatch(r"q_beta([0-9.]+)", name):
        weights = WeightMode.from_beta(float(m.group(1)))
    elif m := re.fullmatch(r"q_([0-9.]+(?:e-?[0-9]+)?)", name):
        weights = WeightMode.explicit(float(m.group(1)), 1.0)
    else:
        raise ArgumentError(f"unknown strategy {name!r}; valid: {', '.join(STRATEGIES)}")
    return CriterionSpec(Q, n_mc=n_mc, seed=seed, weights=weights, q_form=q_form)


@dataclass(frozen=True)
class CampaignConfig:
    system: str
    strategy: str
    n_steps: int
    n_repeats: int = 1
    base_seed: int = 0
    alpha: float = 0.1
    # "auto": inferred variance for the unknown-variance criteria, else known
    noise: str = "auto"
    noise_prior_scale: float = 1.0
    noise_dof: float = 1.0
    empirical_bayes: bool = True
    prior_variance: float = 1.0
    # "auto": variance error for linear systems, log-pdf L1 for nonlinear ones
    error_metric: str = "auto"
    pdf_region: Optional[tuple] = None
    n_mc: int = 10_000
    kde_points: int = 1024
    moments_n_mc: int = 100_000
    truth_n_mc: int = 100_000
    pdf_n_mc: int = 100_000
    variance_n_mc: int = 10_000
    grid_count: int = 1000
    n_starts: int = 8
    variance_reading: str = "squared"
    normalized_init: bool = False
    q_form: str = "exact"
    system_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n_steps < 1 or self.n_repeats < 1:
            raise ArgumentError("n_steps and n_repeats must be >= 1")
        if self.noise not in ("auto", "known", "inferred"):
            raise ArgumentError("noise must be auto, known or inferred")
        if self.error_metric not in ("auto", "variance", "log_pdf_l1"):
            raise ArgumentError("error_metric must be auto, variance or log_pdf_l1")
        if self.system not in benchmarks.system_names():
            raise ArgumentError(
                f"unknown system {self.system!r}; valid: {', '.join(benchmarks.system_names())}"
            )
        strategy_spec(self.strategy)

    def build_system(self):
        opts = dict(self.system_options)
        if self.system.startswith("linear20d"):
            opts.setdefault("variance_reading", self.variance_reading)
        elif self.system.startswith("linear2d"):
            opts.setdefault("grid_count", self.grid_count)
        return benchmarks.get_system(self.system, **opts)

    @property
    def noise_kind(self):
        if self.noise != "auto":
            return self.noise
        unknown = (MI_UNKNOWN_VAR, MI_UNKNOWN_VAR_GAUSSIAN)
        return "inferred" if self.strategy in unknown else "known"

    def metric(self, system):
        if self.error_metric != "auto":
            return self.error_metric
        return "variance" if system.is_linear else "log_pdf_l1"


class RepeatResult(NamedTuple):
    repeat: int
    init_inputs: np.ndarray
    init_outputs: np.ndarray
    inputs: np.ndarray          # (n_steps, m), sign-canonicalized for linear bases
    outputs: np.ndarray
    errors_abs: np.ndarray
    errors_rel: np.ndarray
    warnings: tuple             # (step, message) pairs


class CampaignResult(NamedTuple):
    config: CampaignConfig
    repeats: tuple
    mean: np.ndarray
    std: np.ndarray
    band_lo: np.ndarray
    band_hi: np.ndarray

    @property
    def inputs(self):
        """(L, n_steps, m) array of chosen inputs."""
        return np.stack([r.inputs for r in self.repeats])

    def direction_stats(self, step):
        return direction_stats(self.inputs, step)

    @property
    def warnings(self):
        return [(r.repeat, s, msg) for r in self.repeats for s, msg in r.warnings]


# -- error metrics -------------------------------------------------------------

class _VarianceReference(NamedTuple):
    cov: np.ndarray


def _variance_reference(system, n_mc, seed):
    """Feature covariance used to propagate the mean model's variance."""
    if system.is_linear:
        return _VarianceReference(system.input_dist.covariance)
    z = gaussian_sample(system.input_dist, n_mc, seed)
    return _VarianceReference(np.cov(system.basis.features(z), rowvar=False, bias=True))


def variance_error(post, truth, reference=None, system=None, n_mc=10_000, seed=0):
    """|V_hat - V*| and its relative version for the mean model's output variance.

    V_hat = a C a^T with C the exact input covariance (linear basis) or the
    feature covariance over ``n_mc`` seeded input draws.
    """
    if post.output_dim != 1:
        raise ArgumentError("variance error needs scalar output")
    if reference is None:
        if system is None:
            raise ArgumentError("need a system or a precomputed reference")
        reference = _variance_reference(system, n_mc, seed)
    a = post.mean_coeffs[0]
    v_hat = float(a @ reference.cov @ a)
    err = abs(v_hat - truth.exact_output_variance)
    return err, err / truth.exact_output_variance


def model_pdf(post, input_dist, n_mc, seed, n_grid=1024):
    """KDE of mean-model outputs plus predictive noise, sigma^2 (1 + c)."""
    rng = make_rng(seed)
    z = gaussian_sample(input_dist, n_mc, rng.integers(2 ** 63))
    c = model_error_c(post, z)
    y = post.mean_model(z)[:, 0]
    y = y + np.sqrt(post.noise_variance() * (1.0 + c)) * rng.standard_normal(n_mc)
    return kde_density(y, n_grid=n_grid)


def log_pdf_l1(ref, model, region=None):
    """L1 distance of log densities on the reference grid (rectangle rule).

    Only grid points where both densities exceed 1e-12 (and inside
    ``region`` when given) contribute.  Returns (distance, relative), the
    latter divided by the L1 norm of the reference log density on the same
    points.
    """
    y = ref.grid
    p, q = ref.values, model(y)
    mask = (p > PDF_FLOOR) & (q > PDF_FLOOR)
    if region is not None:
        lo, hi = region
        mask &= (y >= lo) & (y <= hi)
    if not np.any(mask):
        return math.inf, math.inf
    dy = y[1] - y[0]
    lp = np.log(p[mask])
    dist = float(np.sum(np.abs(lp - np.log(q[mask]))) * dy)
    norm = float(np.sum(np.abs(lp)) * dy)
    return dist, dist / norm if norm > 0 else math.inf


def pdf_error(post, truth, input_dist, region=None, n_mc=100_000, seed=0):
    if truth.reference_pdf is None:
        raise ArgumentError("ground truth has no reference pdf")
    return log_pdf_l1(truth.reference_pdf, model_pdf(post, input_dist, n_mc, seed), region)


def direction_stats(inputs, step):
    """Per-coordinate variance (1/L) of the chosen input at ``step`` (1-based).

    Inputs are sign-canonicalized first, so h and -h count as the same
    direction.
    """
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 3 or inputs.shape[0] < 2:
        raise ArgumentError("need an (L >= 2, n_steps, m) array of inputs")
    if not 1 <= step <= inputs.shape[1]:
        raise ArgumentError(f"step must be in 1..{inputs.shape[1]}")
    h = np.array([canonical_sign(v) for v in inputs[:, step - 1]])
    return np.mean((h - h.mean(axis=0)) ** 2, axis=0)


# -- the loop ------------------------------------------------------------------

class _Context(NamedTuple):
    system: object
    truth: object
    moments: object
    var_ref: object
    metric: str


def _context(config):
    system = config.build_system()
    base = config.base_seed
    metric = config.metric(system)
    truth = benchmarks.ground_truth(
        system, n_mc=config.truth_n_mc,
        seed=base,
        with_pdf=(metric == "log_pdf_l1"),
    )
    moments = feature_moments(system.basis, system.input_dist, n_mc=config.moments_n_mc,
                              seed=derive_seed(base, _SHARED_REPEAT, _MOMENTS))
    var_ref = _variance_reference(system, config.variance_n_mc,
                                  derive_seed(base, _SHARED_REPEAT, _VARIANCE))
    return _Context(system, truth, moments, var_ref, metric)


def _fallback_points(feasible):
    if isinstance(feasible, AngleGrid):
        return feasible.points
    if isinstance(feasible, UnitSphere):
        if feasible.dim == 2:
            return AngleGrid(1000).points
        return np.eye(feasible.dim)
    r = np.linspace(feasible.radius / 16, feasible.radius, 16)
    t = np.linspace(0.0, 2.0 * np.pi, 64, endpoint=False)
    R, T = np.meshgrid(r, t)
    return np.column_stack([(R * np.cos(T)).ravel(), (R * np.sin(T)).ravel()])


def _select(acq, system, config, seed, warm):
    """Optimize the acquisition over the system's admissible set."""
    feasible = system.feasible
    sense = acq.spec.sense
    if isinstance(feasible, AngleGrid):
        return optimize_grid(acq, feasible, sense).best_point, None
    if not acq.spec.has_gradient:
        raise ArgumentError(
            f"{acq.spec.tag} has no gradient; it can only run on 2-D angle grids"
        )
    if isinstance(feasible, UnitSphere):
        rep = optimize_sphere(acq, feasible.dim, config.n_starts, seed=seed, sense=sense,
                              warm_start=warm)
    elif isinstance(feasible, Disk):
        rep = optimize_disk(acq, feasible.radius, config.n_starts, seed=seed, sense=sense,
                            warm_start=warm)
    else:
        raise ArgumentError(f"unsupported feasible set {feasible!r}")
    if rep.converged:
        return rep.best_point, None
    # all starts failed: compare with a fixed candidate set and keep the better
    pts = _fallback_points(feasible)
    vals = acq.values(pts)
    k = int(np.argmax(vals) if sense == MAXIMIZE else np.argmin(vals))
    better = vals[k] > rep.best_value if sense == MAXIMIZE else vals[k] < rep.best_value
    point = pts[k].copy() if better else rep.best_point
    return point, "optimizer did not converge from any start; used fallback candidates"


def _monte_carlo_input(system, seed):
    x = gaussian_sample(system.input_dist, 1, seed)[0]
    feasible = system.feasible
    if isinstance(feasible, (AngleGrid, UnitSphere)):
        return x / np.linalg.norm(x)
    r = np.linalg.norm(x)
    return x if r <= feasible.radius else x * (feasible.radius / r)


def _noise_model(config, state):
    if config.noise_kind == "known":
        return KnownVariance(state["noise_var"])
    return InferredVariance(state["nu"] * config.prior_variance if config.empirical_bayes
                            else config.noise_prior_scale, state["nu"])


def _record_error(post, ctx, config, seed):
    if ctx.metric == "variance":
        return variance_error(post, ctx.truth, ctx.var_ref)
    return pdf_error(post, ctx.truth, ctx.system.input_dist, config.pdf_region,
                     config.pdf_n_mc, seed)


def run_campaign(config, repeat_index, context=None):
    """One repeat of the sequential design loop; deterministic in (config, repeat)."""
    ctx = context or _context(config)
    system = ctx.system
    base, r = config.base_seed, int(repeat_index)
    m = system.input_dim
    protocol = system.init_protocol
    if isinstance(protocol, benchmarks.RandomFromInput) and config.normalized_init:
        protocol = replace(protocol, normalize=True)
    X = protocol.points(system.input_dist, derive_seed(base, r, _INIT, 0))
    eps = make_rng(derive_seed(base, r, _NOISE, 0)).standard_normal(len(X))
    Y = system.observe(X, eps)
    init_X, init_Y = X.copy(), Y.copy()

    state = {"noise_var": system.noise_sd ** 2, "alpha": config.alpha,
             "nu": config.noise_dof}
    if config.noise_kind == "known" and not state["noise_var"] > 0:
        raise ArgumentError("known-variance campaigns need a positive noise level")
    pdf_seed = derive_seed(base, _SHARED_REPEAT, _PDF, 1)
    inputs, outputs, errs_abs, errs_rel, warns = [], [], [], [], []
    warm = None
    for step in range(1, config.n_steps + 1):
        if config.noise_kind == "inferred" and config.empirical_bayes:
            try:
                eb = empirical_bayes_fit(X, Y, system.basis, config.prior_variance,
                                         init=(state["alpha"], state["nu"]))
                state["alpha"], state["nu"] = eb.alpha, eb.dof
            except (ConvergenceError, ArgumentError) as exc:
                warns.append((step, f"empirical Bayes kept previous (alpha, nu): {exc}"))
        post = fit(X, Y, system.basis, alpha=state["alpha"], noise=_noise_model(config, state))
        spec = strategy_spec(config.strategy, config.n_mc, 0, config.q_form, config.kde_points)
        if spec is None:
            h = _monte_carlo_input(system, derive_seed(base, r, _MC_INPUT, step))
        else:
            acq = Acquisition(spec, post, ctx.moments, system.input_dist,
                              seed=derive_seed(base, r, _CRIT, step))
            start_seed = derive_seed(base, r, _START, step)
            h, warning = _select(acq, system, config, start_seed, warm)
            if warning:
                warns.append((step, warning))
        if system.is_linear:
            h = canonical_sign(h)  # h and -h are the same design point
        warm = h
        y = system.observe(h[None, :], make_rng(derive_seed(base, r, _NOISE, step))
                           .standard_normal(1))
        X = np.vstack([X, h])
        Y = np.concatenate([Y, y])
        post = fit(X, Y, system.basis, alpha=state["alpha"], noise=_noise_model(config, state))
        e_abs, e_rel = _record_error(post, ctx, config, pdf_seed)
        inputs.append(h)
        outputs.append(float(y[0]))
        errs_abs.append(e_abs)
        errs_rel.append(e_rel)
    return RepeatResult(r, init_X, init_Y, np.array(inputs).reshape(-1, m),
                        np.array(outputs), np.array(errs_abs), np.array(errs_rel),
                        tuple(warns))


def _run_one(args):
    config, r = args
    return run_campaign(config, r)


def _aggregate(config, repeats):
    E = np.stack([rep.errors_abs for rep in repeats])
    mean = E.mean(axis=0)
    std = E.std(axis=0)
    return CampaignResult(config, tuple(repeats), mean, std, mean - 0.2 * std,
                          mean + 0.2 * std)


def run_ensemble(config, threads=1):
    """All repeats of ``config``; ``threads > 1`` runs them in worker processes.

    The result does not depend on ``threads``.
    """
    if threads > 1 and config.n_repeats > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            repeats = list(pool.map(_run_one, [(config, r) for r in range(config.n_repeats)]))
    else:
        ctx = _context(config)
        repeats = [run_campaign(config, r, ctx) for r in range(config.n_repeats)]
    return _aggregate(config, repeats)
