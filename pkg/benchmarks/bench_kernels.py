"""Compare the compiled and pure-Python kernel backends.

Checks that both give the same numbers, then times each kernel at the sizes
the criteria use (KDE of 1e4 to 1e5 draws on a 1024-point grid; rank-one
Cholesky updates for 2 to 20 features).

    python benchmarks/bench_kernels.py [--repeat 5] [--json]
"""

import argparse
import json
import sys
import timeit

import numpy as np

from owldesign import _kernels_py

try:
    from owldesign import _kernels as _compiled
except ImportError:
    _compiled = None


def _cases(rng):
    for n in (10_000, 100_000):
        x = rng.standard_t(5, n)
        grid = np.linspace(x.min() - 1.0, x.max() + 1.0, 1024)
        bw = 1.06 * x.std(ddof=1) * n ** -0.2
        yield f"kde n={n}", "kde_on_grid", (x, grid, bw, 8.0)
    for s in (2, 5, 20):
        A = rng.standard_normal((s, s))
        L = np.linalg.cholesky(A @ A.T + s * np.eye(s))
        yield f"cholupdate s={s}", "chol_rank_one_update", (L, rng.standard_normal(s))


def _best_time(fn, args, repeat):
    number = max(1, int(0.2 / max(timeit.timeit(lambda: fn(*args), number=1), 1e-7)))
    times = timeit.repeat(lambda: fn(*args), number=number, repeat=repeat)
    return min(times) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", action="store_true")
    args = parser.parse_args(argv)
    if _compiled is None:
        print("compiled extension not built; only the Python backend is timed", file=sys.stderr)
    rng = np.random.default_rng(0)
    rows = []
    for label, name, fargs in _cases(rng):
        py = getattr(_kernels_py, name)
        row = {"case": label, "python_s": _best_time(py, fargs, args.repeat)}
        if _compiled is not None:
            cy = getattr(_compiled, name)
            diff = float(np.max(np.abs(cy(*fargs) - py(*fargs))))
            row.update(cython_s=_best_time(cy, fargs, args.repeat), max_abs_diff=diff)
            row["speedup"] = row["python_s"] / row["cython_s"]
        rows.append(row)
    if args.json:
        print(json.dumps(rows, indent=2))
        return 0
    print(f"{'case':<22}{'python':>12}{'cython':>12}{'speedup':>9}{'max diff':>11}")
    for r in rows:
        cy = f"{r['cython_s'] * 1e3:9.3f} ms" if "cython_s" in r else f"{'-':>12}"
        sp = f"{r['speedup']:8.1f}x" if "speedup" in r else f"{'-':>9}"
        diff = f"{r['max_abs_diff']:11.1e}" if "max_abs_diff" in r else f"{'-':>11}"
        print(f"{r['case']:<22}{r['python_s'] * 1e3:9.3f} ms{cy}{sp}{diff}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
