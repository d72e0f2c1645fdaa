import numpy as np
import pytest

from owldesign import benchmarks
from owldesign.benchmarks import (
    SYSTEM_NAMES,
    GroundTruth,
    OnePerAxis,
    RandomFromInput,
    get_system,
    ground_truth,
    linear_20d_coefficients,
    linear_20d_variances,
    make_linear_20d,
    make_nonlinear_2d,
    register_system,
    system_names,
)
from owldesign.errors import ArgumentError, BenchmarkDefinitionError
from owldesign.optimizer import AngleGrid, Disk, UnitSphere
from owldesign.regression import KnownVariance, fit


# independent tables of the stated parameters
A_20 = [(1 + 40 * (m / 10) ** 3) / 1000 for m in range(1, 21)]
S2_20_SQUARED = [(0.25 + (m - 10) ** 2 / 128) / 10 for m in range(1, 21)]


class TestLinear2D:
    def test_case1_variance(self):
        assert ground_truth(get_system("linear2d-case1")).exact_output_variance == pytest.approx(1.910)

    def test_case2_variance(self):
        assert ground_truth(get_system("linear2d-case2")).exact_output_variance == pytest.approx(0.8002)

    def test_case1_map(self):
        assert get_system("linear2d-case1").true_map(np.array([1.0, 1.0])) == pytest.approx(2.1)

    def test_protocol_and_noise(self):
        s = get_system("linear2d-case2")
        assert s.noise_sd ** 2 == pytest.approx(0.05)
        assert s.init_protocol == RandomFromInput(4)
        assert isinstance(s.feasible, AngleGrid)
        np.testing.assert_allclose(s.input_dist.covariance, np.diag([2.0, 0.2]))

    def test_observe_is_reproducible(self):
        s = get_system("linear2d-case1")
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        np.testing.assert_array_equal(s.observe(x, [1.0, -1.0]), [0.8 + s.noise_sd, 1.3 - s.noise_sd])


class TestLinear20D:
    def test_coefficients_table(self):
        np.testing.assert_allclose(linear_20d_coefficients(), A_20, rtol=1e-15)
        assert linear_20d_coefficients()[9] == pytest.approx(0.041)

    def test_sigma10(self):
        for reading in ("cubic", "squared", "cubic_abs"):
            assert linear_20d_variances(reading)[9] == pytest.approx(0.025)

    def test_literal_cubic_reading_is_rejected(self):
        assert np.any(linear_20d_variances("cubic") <= 0)
        with pytest.raises(BenchmarkDefinitionError):
            make_linear_20d("I")

    def test_squared_reading_reproduces_constant(self):
        np.testing.assert_allclose(linear_20d_variances("squared"), S2_20_SQUARED, rtol=1e-15)
        total = float(np.sum(np.square(A_20) * S2_20_SQUARED))
        assert total == pytest.approx(0.0272, abs=1e-4)

    def test_other_readings_miss_constant(self):
        a2 = np.square(A_20)
        assert abs(a2 @ linear_20d_variances("cubic_abs") - 0.0272) > 1e-3

    def test_one_per_axis_init(self):
        s = make_linear_20d("II", variance_reading="squared")
        X = s.init_protocol.points(s.input_dist, 0)
        assert isinstance(s.init_protocol, OnePerAxis) and X.shape == (20, 20)
        post = fit(X, X @ s.coefficients, s.basis, noise=KnownVariance(0.5))
        np.testing.assert_allclose(post.s_xx, 1.1 * np.eye(20))
        assert isinstance(s.feasible, UnitSphere) and s.noise_sd ** 2 == pytest.approx(0.5)

    def test_unknown_reading(self):
        with pytest.raises(ArgumentError):
            linear_20d_variances("quartic")


class TestNonlinear2D:
    def test_case1_map(self):
        assert make_nonlinear_2d("I").true_map(np.array([0.0, 0.1])) == pytest.approx(0.6)

    def test_case2_map(self):
        s = make_nonlinear_2d("II")
        assert s.true_map(np.array([1.0, 1.0])) == pytest.approx(115.0)

    def test_basis_and_domain(self):
        s = make_nonlinear_2d("I")
        assert s.basis.feature_dim == 5
        np.testing.assert_allclose(s.basis.features(np.array([1.0, 1.0])), np.ones(5))
        assert s.feasible == Disk(2.0)
        assert s.init_protocol == RandomFromInput(2)
        assert s.noise_sd ** 2 == pytest.approx(1e-4)

    def test_feature_covariance_is_psd(self):
        from owldesign.regression import basis_moments
        s = make_nonlinear_2d("I")
        fm = basis_moments(s.basis, s.input_dist, 100_000, 0)
        assert np.linalg.eigvalsh(fm.cov).min() >= -1e-10

    def test_truth_seed_consistency(self):
        s = make_nonlinear_2d("I")
        a = ground_truth(s, 100_000, seed=0)
        b = ground_truth(s, 100_000, seed=1)
        assert abs(a.exact_output_variance - b.exact_output_variance) < 3 * np.hypot(a.stderr, b.stderr)
        assert a.stderr > 0

    def test_truth_against_gaussian_moments(self):
        # y0 = 5 z2 + 100 z2^3 + 0.01 z1: Var = 25 s + 3000 s^2 + 15e4 s^3 + 1e-4 * 0.2
        s2 = 5e-3
        exact = 25 * s2 + 2 * 5 * 100 * 3 * s2 ** 2 + 1e4 * 15 * s2 ** 3 + 1e-4 * 0.2
        truth = ground_truth(make_nonlinear_2d("I"), 1_000_000, seed=3)
        assert abs(truth.exact_output_variance - exact) < 3 * truth.stderr

    def test_reference_pdf(self):
        truth = ground_truth(make_nonlinear_2d("I"), 20_000, seed=0, with_pdf=True)
        assert truth.reference_pdf.integral() == pytest.approx(1.0, abs=1e-2)
        assert truth.pdf_n_mc == 20_000 and truth.pdf_seed == 0


class TestRegistry:
    def test_names(self):
        assert set(SYSTEM_NAMES) == {
            "linear2d-case1", "linear2d-case2", "linear20d-lownoise",
            "linear20d-highnoise", "nonlinear2d-case1", "nonlinear2d-case2"}

    def test_unknown(self):
        with pytest.raises(ArgumentError):
            get_system("linear3d")

    def test_register(self, monkeypatch):
        monkeypatch.setattr(benchmarks, "_REGISTRY", dict(benchmarks._REGISTRY))
        register_system("test-linear", lambda **kw: get_system("linear2d-case1"))
        assert "test-linear" in system_names()
        with pytest.raises(ArgumentError):
            register_system("test-linear", lambda **kw: None)

    def test_truth_budget_floor(self):
        with pytest.raises(ArgumentError):
            ground_truth(get_system("linear2d-case1"), n_mc=100)

    def test_ground_truth_type(self):
        assert isinstance(ground_truth(get_system("linear2d-case1")), GroundTruth)
