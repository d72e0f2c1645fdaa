"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np

_CHUNK = 1 << 22  # max sample*grid products held in memory at once


def kde_on_grid(samples, grid, bandwidth, cutoff):
    samples = np.ascontiguousarray(samples, dtype=np.float64)
    grid = np.ascontiguousarray(grid, dtype=np.float64)
    n_grid = grid.shape[0]
    start = grid[0]
    dx = (grid[-1] - grid[0]) / (n_grid - 1)
    reach = cutoff * bandwidth
    # each sample only touches the grid points within ``reach``, as in the
    # compiled loop; the window width bounds the work per sample
    lo = np.maximum(np.ceil((samples - reach - start) / dx), 0).astype(np.intp)
    hi = np.minimum(np.floor((samples + reach - start) / dx), n_grid - 1).astype(np.intp)
    width = int(max(np.max(hi - lo + 1, initial=0), 0))
    out = np.zeros(n_grid)
    if width == 0:
        return out
    offsets = np.arange(width)
    rows = max(1, _CHUNK // width)
    for first in range(0, samples.shape[0], rows):
        sl = slice(first, first + rows)
        idx = lo[sl, None] + offsets[None, :]
        inside = idx <= hi[sl, None]
        idx = np.where(inside, idx, 0)
        u = (grid[idx] - samples[sl, None]) / bandwidth
        k = np.where(inside, np.exp(-0.5 * u * u), 0.0)
        out += np.bincount(idx.ravel(), weights=k.ravel(), minlength=n_grid)
    return out / (samples.shape[0] * bandwidth * np.sqrt(2.0 * np.pi))


def chol_rank_one_update(lower, vec):
    L = np.array(lower, dtype=np.float64, copy=True)
    x = np.array(vec, dtype=np.float64, copy=True)
    for k in range(L.shape[0]):
        d = L[k, k]
        r = np.sqrt(d * d + x[k] * x[k])
        c = r / d
        sn = x[k] / d
        L[k, k] = r
        L[k + 1:, k] = (L[k + 1:, k] + sn * x[k + 1:]) / c
        x[k + 1:] = c * x[k + 1:] - sn * L[k + 1:, k]
    return L
