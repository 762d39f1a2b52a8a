import math

import numpy as np
import pytest

from stochstefan.errors import ConfigurationError, DomainError, EvaluationRangeError, QuadratureWarning
from stochstefan.noise import (
    GaussianConvolutionKernel,
    SeparableKernel,
    TabulatedKernel,
    apply_T_zeta,
    build_basis,
    effective_modes,
    interpolate,
    make_kernel,
    parseval_defect,
    sample_paths,
    simpson_weights,
    trig_basis,
)


@pytest.fixture(scope="module")
def kernel():
    return GaussianConvolutionKernel(1.2, 15.0, normalized=True)


@pytest.fixture(scope="module")
def basis64(kernel):
    return build_basis(kernel, 64, (-10.0, 10.0), 0.02)


class TestQuadratureAndBasis:
    def test_simpson_integrates_cubics(self):
        y = np.linspace(-1.0, 2.0, 31)
        w = simpson_weights(31, y[1] - y[0])
        assert w @ (y**3 - y) == pytest.approx((2.0**4 / 4 - 2.0) - (0.25 - 0.5), abs=1e-13)

    def test_simpson_needs_odd_count(self):
        with pytest.raises(ConfigurationError):
            simpson_weights(10, 0.1)

    def test_trig_basis_orthonormal(self, kernel):
        y, w = kernel.quadrature_grid()
        e = trig_basis(y, 41, kernel.y_support)
        np.testing.assert_allclose(e.T @ (w[:, None] * e), np.eye(41), atol=1e-10)

    def test_trig_basis_vanishes_outside(self):
        assert np.all(trig_basis(np.array([-3.1, 3.1]), 5, 3.0) == 0.0)

    def test_normalized_gaussian_has_unit_norm(self, kernel):
        assert kernel.norm_squared(np.array([0.0, 1.5]))[0] == pytest.approx(1.0, rel=1e-10)


class TestApplyTZeta:
    def test_gaussian_convolution_closed_form(self):
        kernel = GaussianConvolutionKernel(0.8, 12.0, amplitude=1.3)
        s = 1.1
        got = apply_T_zeta(kernel, lambda y: np.exp(-y**2 / (2 * s**2)), [0.0, 0.7])
        var = kernel.width**2 + s**2
        closed = 1.3 * math.sqrt(2 * math.pi) * kernel.width * s / math.sqrt(var) * np.exp(-np.array([0.0, 0.7]) ** 2 / (2 * var))
        np.testing.assert_allclose(got, closed, rtol=0, atol=1e-8)

    def test_zero_input(self, kernel):
        assert np.all(apply_T_zeta(kernel, lambda y: np.zeros_like(y), np.linspace(-2, 2, 5)) == 0.0)

    def test_basis_function_matches_table(self, kernel, basis64):
        x = basis64.eval_grid[::97]
        for k in (0, 5, 30):
            direct = apply_T_zeta(kernel, lambda y: trig_basis(y, k + 1, kernel.y_support)[:, k], x)
            np.testing.assert_allclose(direct, basis64.columns(x)[:, k], atol=1e-10)
            coefficients = np.zeros(k + 1)
            coefficients[k] = 1.0
            np.testing.assert_allclose(apply_T_zeta(kernel, coefficients, x, basis=basis64), direct, atol=1e-10)

    def test_coefficients_need_basis(self, kernel):
        with pytest.raises(ConfigurationError):
            apply_T_zeta(kernel, np.ones(3), [0.0])

    def test_underresolved_quadrature_warns(self):
        kernel = GaussianConvolutionKernel(0.05, 5.0, quadrature_step=0.2)
        with pytest.warns(QuadratureWarning):
            apply_T_zeta(kernel, lambda y: np.cos(3 * y), [0.0, 0.1])


class TestBuildBasis:
    def test_rank_one_separable(self):
        kernel = SeparableKernel(6.0, amplitude=2.0, shape="gaussian", width=1.5)
        basis = build_basis(kernel, 5, (-4.0, 4.0), 0.05)
        x = np.linspace(-4.0, 4.0, 17)
        cols = basis.columns(x)
        np.testing.assert_allclose(cols[:, 0], kernel.profile(0, x), atol=1e-10)
        np.testing.assert_allclose(cols[:, 1:], 0.0, atol=1e-10)

    def test_parseval_defect_decreases_with_modes(self, basis64):
        for x in (-3.0, 0.0, 2.5):
            defects = [parseval_defect(basis64, x, n) for n in (8, 16, 32)]
            assert defects[0] > defects[1] > defects[2] >= -1e-8

    def test_derivative_columns_match_finite_differences(self, basis64):
        x = np.linspace(-6.0, 6.0, 13)
        exact = basis64.direct_columns(x, order=1)[:, :20]
        errors = []
        for step in (0.02, 0.01):
            fd = (basis64.direct_columns(x + step)[:, :20] - basis64.direct_columns(x - step)[:, :20]) / (2 * step)
            errors.append(np.abs(fd - exact).max())
        assert errors[0] < 0.02**2 and errors[0] / errors[1] > 3.5

    def test_tables_match_direct_quadrature_off_grid(self, basis64):
        x = np.array([-7.013, -0.0071, 3.3333])
        for order in (0, 1, 2):
            np.testing.assert_allclose(basis64.columns(x, order), basis64.direct_columns(x, order), atol=1e-6)

    def test_kernel_norm_table(self, basis64):
        assert np.allclose(basis64.kernel_norm_squared(np.array([-5.0, 0.123, 4.0])), 1.0, atol=1e-10)

    def test_range_is_enforced(self, basis64):
        with pytest.raises(EvaluationRangeError):
            basis64.columns(np.array([10.5]))
        with pytest.raises(EvaluationRangeError):
            basis64.kernel_norm_squared(np.array([-11.0]))

    def test_derivative_order_bound(self, basis64):
        with pytest.raises(DomainError):
            basis64.columns(np.array([0.0]), order=3)

    @pytest.mark.parametrize("kwargs", [{"n_modes": 0}, {"n_modes": 2.5}, {"eval_range": (1.0, -1.0)},
                                        {"eval_resolution": 0.0}])
    def test_rejects_bad_arguments(self, kernel, kwargs):
        args = {"n_modes": 4, "eval_range": (-1.0, 1.0), "eval_resolution": 0.1, **kwargs}
        with pytest.raises(ConfigurationError):
            build_basis(kernel, **args)

    def test_effective_modes_of_rank_one_kernel(self):
        basis = build_basis(SeparableKernel(5.0, shape="gaussian"), 6, (-3.0, 3.0), 0.05)
        assert effective_modes(basis, np.linspace(-3, 3, 11)) == pytest.approx(1.0, abs=1e-9)

    def test_effective_modes_of_gaussian_fixture(self, basis64):
        assert effective_modes(basis64, np.linspace(-8, 8, 41)) >= 8


class TestKernels:
    def test_tabulated_kernel_from_csv(self, tmp_path):
        xs, ys = np.linspace(-3, 3, 25), np.linspace(-4, 4, 33)
        table = np.exp(-np.subtract.outer(xs, ys) ** 2 / 2)
        path = tmp_path / "kernel.csv"
        rows = ["x,y,value"] + [f"{float(x)!r},{float(y)!r},{float(table[i, j])!r}" for i, x in enumerate(xs) for j, y in enumerate(ys)]
        path.write_text("\n".join(rows) + "\n")
        kernel = make_kernel("tabulated", {"path": str(path)})
        assert isinstance(kernel, TabulatedKernel) and kernel.max_order == 2
        assert kernel(np.array(0.5), np.array(1.0)) == pytest.approx(math.exp(-0.125), abs=2e-3)
        assert kernel(np.array(0.0), np.array(5.0)) == 0.0

    def test_tabulated_needs_full_grid(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("0,0,1\n0,1,1\n1,0,1\n")
        with pytest.raises(ConfigurationError):
            make_kernel("tabulated", {"path": str(path)})

    def test_table_without_numeric_rows(self, tmp_path):
        path = tmp_path / "words.csv"
        path.write_text("x,y,value\nnan-free,text,only\n")
        with pytest.raises(ConfigurationError):
            make_kernel("tabulated", {"path": str(path)})

    def test_unknown_kernel_lists_builtins(self):
        with pytest.raises(ConfigurationError, match="gaussian_convolution"):
            make_kernel("matern", {})

    def test_bad_kernel_parameters(self):
        with pytest.raises(ConfigurationError):
            make_kernel("gaussian_convolution", {"width": 1.0, "y_support": 5.0, "bandwidth": 2})
        with pytest.raises(ConfigurationError):
            GaussianConvolutionKernel(-1.0, 5.0)

    def test_gaussian_derivatives_by_finite_differences(self, kernel):
        x, y, eps = np.array([0.3, -1.2]), np.array([0.1, 0.5]), 1e-4
        for order in range(1, 5):
            fd = (kernel.derivative(order - 1, x + eps, y) - kernel.derivative(order - 1, x - eps, y)) / (2 * eps)
            np.testing.assert_allclose(kernel.derivative(order, x, y), fd, rtol=1e-6, atol=1e-8)


class TestBrownianDriver:
    def test_deterministic_per_seed(self):
        a = sample_paths(11, 3, 1.0, 1 / 64)
        b = sample_paths(11, 3, 1.0, 1 / 64)
        assert np.array_equal(a.paths, b.paths)
        assert not np.array_equal(a.paths, sample_paths(12, 3, 1.0, 1 / 64).paths)

    def test_starts_at_zero(self):
        assert np.all(sample_paths(0, 4, 0.5, 1 / 128).paths[0] == 0.0)

    def test_terminal_variance(self):
        horizon = 0.7
        finals = np.array([sample_paths(s, 1, horizon, horizon / 4).paths[-1, 0] for s in range(10_000)])
        # standard error of the sample variance is about sqrt(2/N) T = 1.4% of T
        assert abs(finals.var() / horizon - 1.0) < 0.05

    def test_step_must_divide_horizon(self):
        with pytest.raises(ConfigurationError):
            sample_paths(0, 1, 1.0, 0.3)


class TestInterpolant:
    @pytest.fixture
    def driver(self):
        return sample_paths(5, 3, 1.0, 1 / 256)

    def test_agrees_with_path_at_nodes(self, driver):
        interp = interpolate(driver, 16)
        nodes = np.arange(17) / 16
        np.testing.assert_array_equal(interp.value(nodes[:-1]), driver.paths[::16][:-1])
        np.testing.assert_array_equal(interp.node_values, driver.paths[::16])

    def test_terminal_value(self, driver):
        interp = interpolate(driver, 16)
        np.testing.assert_allclose(interp.value(1.0), driver.paths[-1], rtol=0, atol=1e-14)

    def test_slopes_are_increments_over_interval(self, driver):
        interp = interpolate(driver, 8)
        for i in range(8):
            np.testing.assert_allclose(interp.slope(i / 8 + 0.01), (driver.paths[(i + 1) * 32] - driver.paths[i * 32]) * 8,
                                       rtol=1e-13)

    def test_slope_integral_telescopes(self, driver):
        interp = interpolate(driver, 32)
        cumulative = np.cumsum(interp.slopes * interp.interval, axis=0)
        np.testing.assert_allclose(cumulative, driver.paths[::8][1:], atol=1e-12)

    def test_slope_uses_only_its_interval(self, driver):
        interp = interpolate(driver, 16)
        i = 5
        tampered = driver.paths.copy()
        mask = np.ones(tampered.shape[0], bool)
        mask[[i * 16, (i + 1) * 16]] = False
        tampered[mask] += 100.0
        from stochstefan.noise import BrownianDriver

        again = interpolate(BrownianDriver(3, 1.0, driver.fine_step, tampered), 16)
        np.testing.assert_array_equal(again.slopes[i], interp.slopes[i])

    def test_fine_index_lookup(self, driver):
        interp = interpolate(driver, 4)
        assert np.array_equal(interp.slope_for_fine_index(63), interp.slopes[0])
        assert np.array_equal(interp.slope_for_fine_index(64), interp.slopes[1])

    @pytest.mark.parametrize("m", [0, 3, 512, 2.5])
    def test_incompatible_levels(self, driver, m):
        with pytest.raises(ConfigurationError):
            interpolate(driver, m)
