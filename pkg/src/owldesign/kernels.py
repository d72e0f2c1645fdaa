"""Backend selection for the numerical hot loops.

The Cython extension ``owldesign._kernels`` is used when it was built;
otherwise the numpy implementations in ``owldesign._kernels_py`` are used.
Set ``OWLDESIGN_PURE_PYTHON=1`` to force the fallback.
"""

import os

import numpy as np

from . import _kernels_py

BACKEND = "python"

if os.environ.get("OWLDESIGN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None
else:
    _compiled = None

_impl = _compiled if _compiled is not None else _kernels_py
if _compiled is not None:
    BACKEND = "cython"


def kde_on_grid(samples, grid, bandwidth, cutoff=8.0):
    """Gaussian-kernel density of ``samples`` on the uniform ``grid``.

    Kernel contributions beyond ``cutoff`` bandwidths are dropped.
    """
    return _impl.kde_on_grid(
        np.ascontiguousarray(samples, dtype=np.float64),
        np.ascontiguousarray(grid, dtype=np.float64),
        float(bandwidth),
        float(cutoff),
    )


def chol_rank_one_update(lower, vec):
    """Cholesky factor of ``L L^T + v v^T`` given lower-triangular ``L``."""
    return _impl.chol_rank_one_update(
        np.ascontiguousarray(lower, dtype=np.float64),
        np.ascontiguousarray(vec, dtype=np.float64),
    )


__all__ = ["BACKEND", "kde_on_grid", "chol_rank_one_update"]
