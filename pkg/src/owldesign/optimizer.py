"""Optimization of acquisition criteria over the admissible inputs.

Three feasible sets: the unit sphere, a 1-D angle grid on the half circle
(2-D inputs) and a disk.  Gradient-based search is projected gradient with
Armijo backtracking and multiple starts; gradient-free criteria go through
the grid.
"""

from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from .criteria import MAXIMIZE, MINIMIZE, CriterionValue
from .errors import ArgumentError
from .stochastics import make_rng

GRAD_TOL = 1e-8
STALL_TOL = 1e-6
MAX_ITERS = 500
N_STARTS = 8
ARMIJO_C = 1e-4
MAX_BACKTRACKS = 30
SHRINK = 0.5


@dataclass(frozen=True)
class UnitSphere:
    dim: int

    def __post_init__(self):
        if self.dim < 1:
            raise ArgumentError("sphere dimension must be >= 1")


@dataclass(frozen=True)
class AngleGrid:
    """h = (cos t, sin t) for ``count`` equispaced t in [-pi/2, pi/2]."""

    count: int = 1000

    def __post_init__(self):
        if self.count < 8:
            raise ArgumentError("angle grid needs at least 8 points")

    @property
    def dim(self):
        return 2

    @property
    def angles(self):
        return np.linspace(-0.5 * np.pi, 0.5 * np.pi, self.count)

    @property
    def points(self):
        t = self.angles
        return np.column_stack([np.cos(t), np.sin(t)])


@dataclass(frozen=True)
class Disk:
    radius: float = 2.0
    dim: int = 2

    def __post_init__(self):
        if not self.radius > 0:
            raise ArgumentError("disk radius must be positive")
        if self.dim != 2:
            raise ArgumentError("only 2-D disks are supported")


class OptimizeReport(NamedTuple):
    best_point: np.ndarray
    best_value: float
    starts_used: int
    converged_flags: tuple
    iterations: tuple
    warning: Optional[str] = None

    @property
    def converged(self):
        return any(self.converged_flags)


def canonical_sign(h):
    """Flip ``h`` so that its first nonzero component is positive."""
    h = np.asarray(h, dtype=float)
    nz = np.flatnonzero(h)
    if nz.size and h[nz[0]] < 0:
        return -h
    return h.copy()


def _check_sense(sense):
    if sense not in (MINIMIZE, MAXIMIZE):
        raise ArgumentError(f"sense must be {MINIMIZE!r} or {MAXIMIZE!r}")
    return 1.0 if sense == MINIMIZE else -1.0


def _scalar(out):
    if isinstance(out, CriterionValue):
        return float(out.value)
    if isinstance(out, tuple):
        return float(out[0])
    return float(out)


def _value_grad(out):
    if isinstance(out, CriterionValue):
        value, grad = out.value, out.gradient
    else:
        value, grad = out
    if grad is None:
        raise ArgumentError("objective returned no gradient")
    return float(value), np.asarray(grad, dtype=float)


def optimize_grid(objective, grid, sense=MINIMIZE):
    """Exhaustive search over an :class:`AngleGrid`; ties go to the smallest angle.

    An objective with a ``values(points)`` method is evaluated in one batch.
    """
    if not isinstance(grid, AngleGrid):
        raise ArgumentError("optimize_grid needs an AngleGrid (2-D inputs)")
    sign = _check_sense(sense)
    pts = grid.points
    if hasattr(objective, "values"):
        vals = np.asarray(objective.values(pts), dtype=float)
    else:
        vals = np.array([_scalar(objective(p)) for p in pts])
    k = int(np.argmin(sign * vals))  # first occurrence, i.e. smallest angle
    return OptimizeReport(pts[k].copy(), float(vals[k]), 1, (True,), (grid.count,))


def _sphere_project(z):
    return z / np.linalg.norm(z)


def _disk_project(radius):
    def project(z):
        r = np.linalg.norm(z)
        return z if r <= radius else z * (radius / r)
    return project


def _sphere_tangent(z, g):
    return g - (g @ z) * z


def _disk_tangent(radius):
    def tangent(z, g):
        r = np.linalg.norm(z)
        # on the boundary with descent pointing outward: slide along it
        if r >= radius * (1.0 - 1e-12) and g @ z < 0:
            u = z / r
            return g - (g @ u) * u
        return g
    return tangent


def _descend(fun, value, z, project, tangent, max_iters):
    """Projected gradient descent from ``z``; returns (z, f, converged, iters).

    ``fun`` gives (value, gradient); ``value`` only the value, used for the
    trial points of the line search.
    """
    f, g = fun(z)
    for it in range(max_iters):
        gp = tangent(z, g)
        gnorm = np.linalg.norm(gp)
        if not np.isfinite(gnorm):
            return z, f, False, it
        if gnorm < GRAD_TOL:
            return z, f, True, it
        d = -gp / gnorm
        t = 1.0
        for _ in range(MAX_BACKTRACKS + 1):
            z_new = project(z + t * d)
            f_new = value(z_new)
            if f_new < f and f_new <= f - ARMIJO_C * t * gnorm:
                break
            t *= SHRINK
        else:
            # no decrease resolvable in floating point: accept as stationary
            # if the gradient is small relative to the objective's scale
            return z, f, bool(gnorm < STALL_TOL * max(1.0, abs(f))), it
        z = z_new
        f, g = fun(z)
    return z, f, False, max_iters


def _multistart(objective, starts, sign, project, tangent, max_iters, canonical):
    def fun(z):
        value, grad = _value_grad(objective(z))
        return sign * value, sign * grad

    if hasattr(objective, "value"):
        def value(z):
            return sign * float(objective.value(z))
    else:
        def value(z):
            return sign * _scalar(objective(z))

    results = [_descend(fun, value, s, project, tangent, max_iters) for s in starts]
    k = int(np.argmin([r[1] for r in results]))
    z, f = results[k][0], results[k][1]
    return OptimizeReport(
        canonical_sign(z) if canonical else z.copy(), sign * f, len(starts),
        tuple(r[2] for r in results), tuple(r[3] for r in results),
    )


def random_unit_vectors(n, m, seed):
    z = make_rng(seed).standard_normal((n, m))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


def optimize_sphere(objective, m, n_starts=N_STARTS, max_iters=MAX_ITERS, seed=0,
                    sense=MINIMIZE, warm_start=None):
    """Multi-start projected gradient on the unit sphere in R^m.

    ``objective(h)`` returns a :class:`CriterionValue` or ``(value, gradient)``.
    With ``warm_start`` the starts are the warm start plus ``n_starts - 1``
    seeded random unit vectors.
    """
    sign = _check_sense(sense)
    if n_starts < 1:
        raise ArgumentError("n_starts must be >= 1")
    starts = []
    if warm_start is not None:
        w = np.asarray(warm_start, dtype=float)
        if w.shape != (m,) or not np.linalg.norm(w) > 0:
            raise ArgumentError("warm start must be a nonzero vector of length m")
        starts.append(_sphere_project(w))
    starts.extend(random_unit_vectors(n_starts - len(starts), m, seed))
    return _multistart(objective, starts, sign, _sphere_project, _sphere_tangent, max_iters,
                       canonical=True)


def optimize_disk(objective, radius, n_starts=N_STARTS, seed=0, sense=MINIMIZE,
                  warm_start=None, max_iters=MAX_ITERS):
    """Multi-start projected gradient on the disk |z| <= radius (radial clipping)."""
    sign = _check_sense(sense)
    if not radius > 0:
        raise ArgumentError("disk radius must be positive")
    project = _disk_project(radius)
    starts = []
    if warm_start is not None:
        starts.append(project(np.asarray(warm_start, dtype=float)))
    k = n_starts - len(starts)
    rng = make_rng(seed)
    r = radius * np.sqrt(rng.uniform(size=k))
    t = rng.uniform(0.0, 2.0 * np.pi, size=k)
    starts.extend(np.column_stack([r * np.cos(t), r * np.sin(t)]))
    # no sign canonicalization: with even features phi(-z) != -phi(z)
    return _multistart(objective, starts, sign, project, _disk_tangent(radius), max_iters,
                       canonical=False)
