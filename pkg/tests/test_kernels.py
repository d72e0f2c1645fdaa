import numpy as np
import pytest

from owldesign import _kernels_py, kernels


def _backends():
    out = [_kernels_py]
    try:
        from owldesign import _kernels
        out.append(_kernels)
    except ImportError:
        pass
    return out


@pytest.mark.parametrize("impl", _backends(), ids=lambda m: m.__name__)
def test_kde_matches_dense_sum(impl):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(500)
    grid = np.linspace(-5, 5, 301)
    h = 0.3
    dense = np.exp(-0.5 * ((grid[:, None] - x[None, :]) / h) ** 2).sum(1) / (len(x) * h * np.sqrt(2 * np.pi))
    got = impl.kde_on_grid(x, grid, h, 8.0)
    np.testing.assert_allclose(got, dense, atol=1e-14)


@pytest.mark.parametrize("impl", _backends(), ids=lambda m: m.__name__)
def test_cholupdate_matches_refactorization(impl):
    rng = np.random.default_rng(1)
    for m in (1, 2, 5, 20):
        A = rng.standard_normal((m, m))
        S = A @ A.T + np.eye(m)
        v = rng.standard_normal(m)
        L = np.linalg.cholesky(S)
        L1 = impl.chol_rank_one_update(L, v)
        np.testing.assert_allclose(L1, np.linalg.cholesky(S + np.outer(v, v)), atol=1e-12)
        np.testing.assert_array_equal(L, np.linalg.cholesky(S))  # input untouched


def test_backends_agree():
    backends = _backends()
    if len(backends) < 2:
        pytest.skip("compiled extension not built")
    rng = np.random.default_rng(2)
    x = rng.standard_normal(2000)
    grid = np.linspace(-6, 6, 1024)
    a, b = (impl.kde_on_grid(x, grid, 0.25, 8.0) for impl in backends)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_backend_name():
    assert kernels.BACKEND in ("cython", "python")


def test_cholupdate_sign_symmetric():
    rng = np.random.default_rng(3)
    L = np.linalg.cholesky(np.eye(4) * 2.0)
    v = rng.standard_normal(4)
    np.testing.assert_array_equal(kernels.chol_rank_one_update(L, v),
                                  kernels.chol_rank_one_update(L, -v))


@pytest.mark.parametrize("impl", _backends(), ids=lambda m: m.__name__)
def test_kde_samples_off_grid(impl):
    grid = np.linspace(0.0, 1.0, 11)
    out = impl.kde_on_grid(np.array([50.0, -50.0]), grid, 0.1, 8.0)
    np.testing.assert_array_equal(out, 0.0)


def test_pure_python_switch():
    import subprocess
    import sys
    code = "from owldesign import kernels; print(kernels.BACKEND)"
    env = dict(__import__("os").environ, OWLDESIGN_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == "python"
