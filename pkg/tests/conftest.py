import numpy as np
import pytest

from owldesign.regression import BasisSpec, KnownVariance, fit
from owldesign.stochastics import InputDistribution


def random_spd(rng, m, scale=1.0):
    A = rng.standard_normal((m, m))
    return scale * (A @ A.T / m + 0.2 * np.eye(m))


def random_dist(rng, m, zero_mean=False):
    mean = np.zeros(m) if zero_mean else rng.normal(0.0, 0.5, m)
    return InputDistribution(mean, random_spd(rng, m))


def random_posterior(rng, basis, n=None, noise=None, alpha=0.1):
    m = basis.input_dim
    n = n if n is not None else int(rng.integers(2, 8))
    X = rng.standard_normal((n, m))
    coeffs = rng.standard_normal(basis.feature_dim)
    Y = basis.features(X) @ coeffs + 0.1 * rng.standard_normal(n)
    return fit(X, Y, basis, alpha=alpha, noise=noise or KnownVariance(0.05))


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


LINEAR2 = BasisSpec.linear(2)
CUBIC = BasisSpec.monomials(((0, 1), (1, 0), (1, 1), (0, 3), (3, 0)))


# -- acceptance reporting: one pass/fail line per criterion ------------------

_ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None or report.when == "teardown":
        return
    number, title = marker.args
    if report.when == "setup" and report.passed:
        return
    detail = dict(item.user_properties).get("detail", "")
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    _ACCEPTANCE[number] = (status, title, report.duration, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        status, title, seconds, detail = _ACCEPTANCE[number]
        line = f"ACCEPTANCE {number:>2} {status}  {title} ({seconds:.1f} s)"
        if detail:
            line += f"  [{detail}]"
        terminalreporter.write_line(line)
