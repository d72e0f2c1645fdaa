"""Benchmark systems: two linear 2-D cases, a 20-D linear map and a cubic 2-D map.

Each system bundles the true map, the Gaussian input law, the observation
noise, the model basis, the admissible set for new inputs and the protocol
for the initial samples.
"""

from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np

from .errors import ArgumentError, BenchmarkDefinitionError
from .optimizer import AngleGrid, Disk, UnitSphere
from .regression import DEFAULT_ALPHA, ODD_CUBIC_2D, BasisSpec
from .stochastics import InputDistribution, gaussian_sample, kde_density

MIN_TRUTH_MC = 10_000


@dataclass(frozen=True)
class RandomFromInput:
    """``count`` draws from the input law, optionally scaled to unit norm."""

    count: int
    normalize: bool = False

    def points(self, dist, seed):
        x = gaussian_sample(dist, self.count, seed)
        if self.normalize:
            x = x / np.linalg.norm(x, axis=1, keepdims=True)
        return x


@dataclass(frozen=True)
class OnePerAxis:
    """The unit basis vectors, one sample per input direction."""

    def points(self, dist, seed=None):
        return np.eye(dist.dim)


@dataclass(frozen=True, eq=False)
class BenchmarkSystem:
    name: str
    true_map: Callable
    input_dist: InputDistribution
    noise_sd: float
    basis: BasisSpec
    feasible: object
    init_protocol: object
    alpha: float = DEFAULT_ALPHA
    coefficients: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.noise_sd >= 0:
            raise BenchmarkDefinitionError("noise_sd must be >= 0")
        if not np.all(np.isfinite(self.true_map(self.input_dist.mean))):
            raise BenchmarkDefinitionError("true map is not finite at the input mean")

    @property
    def input_dim(self):
        return self.input_dist.dim

    @property
    def is_linear(self):
        return self.basis.is_linear

    def observe(self, x, eps):
        """Noisy outputs at ``x`` given standard-normal draws ``eps``."""
        return self.true_map(x) + self.noise_sd * np.asarray(eps)


def _case(case):
    key = str(case).strip().upper()
    if key in ("I", "1"):
        return 1
    if key in ("II", "2"):
        return 2
    raise ArgumentError(f"unknown case {case!r}; use I or II")


def _linear_map(coeffs):
    coeffs = np.array(coeffs, dtype=float)
    coeffs.setflags(write=False)

    def true_map(x):
        return np.asarray(x, dtype=float) @ coeffs
    return true_map, coeffs


LINEAR_2D = {
    1: ((0.8, 1.3), (1.4, 0.6)),
    2: ((0.01, 2.0), (2.0, 0.2)),
}
LINEAR_2D_NOISE_VAR = 0.05


def make_linear_2d(case, grid_count=1000):
    k = _case(case)
    coeffs, variances = LINEAR_2D[k]
    true_map, coeffs = _linear_map(coeffs)
    return BenchmarkSystem(
        name=f"linear2d-case{k}",
        true_map=true_map,
        input_dist=InputDistribution.diagonal(variances),
        noise_sd=np.sqrt(LINEAR_2D_NOISE_VAR),
        basis=BasisSpec.linear(2),
        feasible=AngleGrid(grid_count),
        init_protocol=RandomFromInput(4),
        coefficients=coeffs,
    )


LINEAR_20D_NOISE_VAR = {1: 0.05, 2: 0.5}
VARIANCE_READINGS = ("cubic", "squared", "cubic_abs")


def linear_20d_coefficients():
    m = np.arange(1, 21)
    return (1.0 + 40.0 * (m / 10.0) ** 3) * 1e-3


def linear_20d_variances(reading="cubic"):
    """Input variances for m = 1..20 under one reading of the exponent.

    ``cubic`` is the formula as usually quoted, (1/4 + (m-10)^3/128) / 10,
    which is negative for m <= 6.  ``squared`` uses (m-10)^2 and reproduces
    sum a_m^2 sigma_m^2 = 0.0272; ``cubic_abs`` uses |m-10|^3.
    """
    m = np.arange(1, 21)
    if reading == "cubic":
        t = (m - 10.0) ** 3
    elif reading == "squared":
        t = (m - 10.0) ** 2
    elif reading == "cubic_abs":
        t = np.abs(m - 10.0) ** 3
    else:
        raise ArgumentError(f"unknown variance reading {reading!r}; valid: {VARIANCE_READINGS}")
    return (0.25 + t / 128.0) * 0.1


def make_linear_20d(noise_case, variance_reading=None):
    """20-D linear system; ``noise_case`` I (var 0.05) or II (var 0.5).

    ``variance_reading`` must be chosen explicitly because the literal cubic
    formula yields negative variances.
    """
    k = _case(noise_case)
    variances = linear_20d_variances(variance_reading or "cubic")
    if np.any(variances <= 0):
        bad = np.flatnonzero(variances <= 0) + 1
        raise BenchmarkDefinitionError(
            f"input variances are non-positive for m = {bad.tolist()} under the "
            f"{variance_reading or 'cubic'!r} reading; pass variance_reading="
            "'squared' or 'cubic_abs'"
        )
    true_map, coeffs = _linear_map(linear_20d_coefficients())
    return BenchmarkSystem(
        name="linear20d-lownoise" if k == 1 else "linear20d-highnoise",
        true_map=true_map,
        input_dist=InputDistribution.diagonal(variances),
        noise_sd=np.sqrt(LINEAR_20D_NOISE_VAR[k]),
        basis=BasisSpec.linear(20),
        feasible=UnitSphere(20),
        init_protocol=OnePerAxis(),
        coefficients=coeffs,
    )


# (a1, a2, a3, a4) for a1 z1 + a2 z2 + a3 z1^3 + a4 z2^3, then the variances
NONLINEAR_2D = {
    1: ((1e-2, 5.0, 0.0, 1e2), (2e-1, 5e-3)),
    2: ((10.0, 5.0, 0.0, 1e2), (2e-3, 5e-3)),
}
NONLINEAR_2D_NOISE_VAR = 1e-4


def make_nonlinear_2d(case, radius=2.0):
    k = _case(case)
    (a1, a2, a3, a4), variances = NONLINEAR_2D[k]

    def true_map(z):
        z = np.asarray(z, dtype=float)
        z1, z2 = z[..., 0], z[..., 1]
        return a1 * z1 + a2 * z2 + a3 * z1 ** 3 + a4 * z2 ** 3

    return BenchmarkSystem(
        name=f"nonlinear2d-case{k}",
        true_map=true_map,
        input_dist=InputDistribution.diagonal(variances),
        noise_sd=np.sqrt(NONLINEAR_2D_NOISE_VAR),
        basis=BasisSpec.monomials(ODD_CUBIC_2D),
        feasible=Disk(radius),
        init_protocol=RandomFromInput(2),
    )


_REGISTRY = {
    "linear2d-case1": lambda **kw: make_linear_2d("I", **kw),
    "linear2d-case2": lambda **kw: make_linear_2d("II", **kw),
    "linear20d-lownoise": lambda **kw: make_linear_20d("I", **kw),
    "linear20d-highnoise": lambda **kw: make_linear_20d("II", **kw),
    "nonlinear2d-case1": lambda **kw: make_nonlinear_2d("I", **kw),
    "nonlinear2d-case2": lambda **kw: make_nonlinear_2d("II", **kw),
}
SYSTEM_NAMES = tuple(_REGISTRY)


def register_system(name, factory):
    """Make ``factory(**options) -> BenchmarkSystem`` available by ``name``."""
    if name in _REGISTRY:
        raise ArgumentError(f"system {name!r} is already registered")
    _REGISTRY[name] = factory


def system_names():
    return tuple(_REGISTRY)


def get_system(name, **options):
    try:
        factory = _REGISTRY[name]
    except KeyError:
        raise ArgumentError(
            f"unknown system {name!r}; valid: {', '.join(_REGISTRY)}"
        ) from None
    return factory(**options)


class GroundTruth(NamedTuple):
    exact_output_variance: float
    stderr: float = 0.0
    reference_pdf: object = None
    pdf_n_mc: int = 0
    pdf_seed: Optional[int] = None


def ground_truth(system, n_mc=100_000, seed=0, with_pdf=False):
    """Variance of the noise-free output and, optionally, a reference pdf.

    Linear systems use a C a^T exactly; the nonlinear ones a seeded
    Monte-Carlo estimate with its standard error.  The reference pdf is a KDE
    of noisy outputs from ``n_mc`` draws.
    """
    if n_mc < MIN_TRUTH_MC:
        raise ArgumentError(f"ground truth needs n_mc >= {MIN_TRUTH_MC}")
    dist = system.input_dist
    need_mc = with_pdf or system.coefficients is None
    if need_mc:
        rng_seed = np.random.SeedSequence(seed)
        s_in, s_noise = rng_seed.spawn(2)
        x = gaussian_sample(dist, n_mc, s_in)
        y0 = system.true_map(x)
    if system.coefficients is not None:
        a = system.coefficients
        var, se = float(a @ dist.covariance @ a), 0.0
    else:
        var = float(np.var(y0, ddof=1))
        # standard error of the sample variance from the fourth central moment
        d = y0 - y0.mean()
        m4 = np.mean(d ** 4)
        se = float(np.sqrt(max(m4 - var ** 2, 0.0) / n_mc))
    pdf = None
    if with_pdf:
        eps = np.random.Generator(np.random.PCG64(s_noise)).standard_normal(n_mc)
        pdf = kde_density(system.observe(x, eps))
    return GroundTruth(var, se, pdf, n_mc if with_pdf else 0, seed if with_pdf else None)
