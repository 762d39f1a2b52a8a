import math

import numpy as np
import pytest
from scipy.optimize import brentq

from stochstefan.errors import ConfigurationError, DomainError
from stochstefan.spectral import (
    BoundarySpec,
    alpha_norm,
    assemble_operator,
    boundary_slope,
    boundary_trace,
    build_grid,
    discrete_sobolev_norm,
    fractional_power_apply,
    semigroup_apply,
    verify_smoothing_bound,
)


def rel(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), 1e-300)


class TestGrid:
    def test_interior_nodes(self):
        grid = build_grid(10.0, 5)
        np.testing.assert_array_equal(grid.nodes, [2.0, 4.0, 6.0, 8.0, 10.0])

    def test_spacing(self):
        assert build_grid(1.0, 3).spacing == pytest.approx(1.0 / 3.0, abs=1e-15)

    @pytest.mark.parametrize("length, n", [(0.0, 5), (-1.0, 5), (1.0, 2), (1.0, 3.5), (math.inf, 4)])
    def test_rejects_bad_grids(self, length, n):
        with pytest.raises(ConfigurationError):
            build_grid(length, n)


class TestAssembly:
    def test_dirichlet_ground_state_matches_continuum(self):
        # the far-end ghost node sits at L + h, so the effective interval is (0, pi)
        n = 64
        op = assemble_operator(build_grid(math.pi * n / (n + 1), n), BoundarySpec(), 1.0, 0.5)
        h = op.grid.spacing
        assert abs(op.eigenvalues[0] - 1.5) <= h**2
        # exact discrete value of the three-point stencil
        assert op.eigenvalues[0] == pytest.approx(4.0 / h**2 * math.sin(h / 2) ** 2 + 0.5, rel=1e-12)

    def test_dirichlet_eigenvalue_error_is_second_order(self):
        errors = []
        for n in (32, 64, 128):
            op = assemble_operator(build_grid(math.pi * n / (n + 1), n), BoundarySpec(), 1.0, 0.5)
            errors.append(abs(op.eigenvalues[:3] - (np.arange(1, 4) ** 2 + 0.5)).max())
        orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
        assert np.all(orders > 1.9)

    def test_robin_eigenvalue_matches_transcendental_root(self):
        # -u'' = k^2 u, u'(0) = kappa u(0), u(L') = 0 gives u = sin(k (L' - x)) with tan(k L') = -k / kappa
        kappa, errors = 1.0, []
        for n in (32, 64, 128):
            grid = build_grid(4.0, n)
            far = grid.length + grid.spacing
            k = brentq(lambda k: math.sin(k * far) * kappa + k * math.cos(k * far), math.pi / (2 * far) + 1e-9,
                       math.pi / far - 1e-9)
            op = assemble_operator(grid, BoundarySpec("robin", kappa, kappa), 1.0, 0.5)
            errors.append(abs(op.eigenvalues[0] - (k**2 + 0.5)))
        assert errors[-1] < 1e-3
        assert math.log2(errors[0] / errors[1]) > 1.8 and math.log2(errors[1] / errors[2]) > 1.8

    def test_robin_eigenvectors_satisfy_boundary_condition_to_second_order(self):
        # slope from the cubic through (0, h, 2h, 3h) is independent of the elimination stencil
        kappa, residuals = 0.7, []
        for n in (128, 256, 512):
            op = assemble_operator(build_grid(4.0, n), BoundarySpec("robin", kappa, kappa), 1.0, 0.5)
            h = op.grid.spacing
            worst = 0.0
            for j in range(2):
                v = op.eigenvectors[:, j]
                u0 = op.ghost_value(v)
                slope = (-11 * u0 + 18 * v[0] - 9 * v[1] + 2 * v[2]) / (6 * h)
                worst = max(worst, abs(slope - kappa * u0) / np.max(np.abs(v)))
            residuals.append(worst)
        assert math.log2(residuals[0] / residuals[1]) > 1.8
        assert math.log2(residuals[1] / residuals[2]) > 1.8

    @pytest.mark.parametrize("kind", ["dirichlet", "robin"])
    def test_weighted_symmetry_and_orthonormality(self, kind, operator_factory):
        op = operator_factory(kind, n=40, length=5.0, eta=1.0, shift=1.0)
        weighted = op.weights[:, None] * op.matrix
        np.testing.assert_allclose(weighted, weighted.T, atol=1e-10 * np.abs(weighted).max())
        gram = op.eigenvectors.T @ (op.weights[:, None] * op.eigenvectors)
        np.testing.assert_allclose(gram, np.eye(40), atol=1e-12)
        assert np.all(np.isreal(op.eigenvalues)) and np.all(op.eigenvalues > 0)

    def test_robin_weight_for_zero_kappa_limit(self):
        grid = build_grid(1.0, 10)
        op = assemble_operator(grid, BoundarySpec("robin", 1e-12, 1e-12), 1.0, 1.0)
        assert op.weights[0] == pytest.approx(1.5 * grid.spacing, rel=1e-9)

    @pytest.mark.parametrize("eta, shift", [(0.0, 1.0), (-1.0, 1.0), (1.0, 0.0), (1.0, -0.5)])
    def test_rejects_nonpositive_parameters(self, eta, shift):
        with pytest.raises(ConfigurationError):
            assemble_operator(build_grid(1.0, 8), BoundarySpec(), eta, shift)

    def test_robin_needs_positive_kappa(self):
        with pytest.raises(ConfigurationError):
            BoundarySpec("robin", 0.0, 1.0)
        with pytest.raises(ConfigurationError):
            BoundarySpec("neumann")

    def test_field_size_checked(self, operator_factory):
        op = operator_factory(n=16)
        with pytest.raises(ConfigurationError):
            semigroup_apply(op, 0.1, np.ones(15))


class TestFunctionalCalculus:
    @pytest.fixture(params=["dirichlet", "robin"])
    def op(self, request, operator_factory):
        return operator_factory(request.param, n=96, length=6.0, eta=0.8, shift=0.5)

    @pytest.fixture
    def field(self, op):
        x = op.grid.nodes
        return np.sin(x) * np.exp(-0.3 * x) + 0.1 * np.random.default_rng(3).standard_normal(x.size)

    def test_zero_power_is_identity(self, op, field):
        assert rel(fractional_power_apply(op, 0.0, field), field) < 1e-12

    def test_unit_power_is_the_matrix(self, op, field):
        assert rel(fractional_power_apply(op, 1.0, field), op.matrix @ field) < 1e-10

    def test_half_power_twice(self, op, field):
        half = fractional_power_apply(op, 0.5, fractional_power_apply(op, 0.5, field))
        assert rel(half, op.matrix @ field) < 1e-10

    def test_negative_power_inverts(self, op, field):
        back = op.matrix @ fractional_power_apply(op, -1.0, field)
        assert rel(back, field) < 1e-10

    def test_semigroup_identity_at_zero(self, op, field):
        assert rel(semigroup_apply(op, 0.0, field), field) < 1e-12

    def test_semigroup_on_eigenvector(self, op):
        j = 3
        v = op.eigenvectors[:, j]
        assert rel(semigroup_apply(op, 1.0, v), math.exp(-op.eigenvalues[j]) * v) < 1e-12

    def test_semigroup_matches_matrix_exponential(self, op, field):
        from scipy.linalg import expm

        assert rel(semigroup_apply(op, 0.05, field), expm(-0.05 * op.matrix) @ field) < 1e-10

    def test_propagator_matches_apply(self, op, field):
        assert rel(op.propagator(0.2) @ field, semigroup_apply(op, 0.2, field)) < 1e-12

    @pytest.mark.parametrize("t", [0.1, 1.0, 10.0])
    def test_negative_type(self, op, t):
        rng = np.random.default_rng(7)
        for _ in range(5):
            f = rng.standard_normal(op.size)
            assert op.l2_norm(semigroup_apply(op, t, f)) <= math.exp(-op.shift * t) * op.l2_norm(f) * (1 + 1e-12)

    def test_negative_time_rejected(self, op, field):
        with pytest.raises(DomainError):
            semigroup_apply(op, -1e-3, field)
        with pytest.raises(DomainError):
            op.propagator(-1.0)

    def test_alpha_zero_is_l2(self, op, field):
        assert alpha_norm(op, 0.0, field) == pytest.approx(op.l2_norm(field), rel=1e-12)

    def test_alpha_norm_of_eigenvector(self, op):
        for j in (0, 5, 40):
            assert alpha_norm(op, 0.75, op.eigenvectors[:, j]) == pytest.approx(op.eigenvalues[j] ** 0.75, rel=1e-10)

    def test_alpha_norm_monotone_for_large_eigenvalues(self, operator_factory):
        op = operator_factory("dirichlet", n=64, length=3.0, eta=1.0, shift=1.0)
        assert op.eigenvalues.min() >= 1.0
        f = np.random.default_rng(1).standard_normal(op.size)
        f /= op.l2_norm(f)
        values = [alpha_norm(op, a, f) for a in np.linspace(0, 1, 11)]
        assert np.all(np.diff(values) >= 0)


class TestSmoothing:
    @pytest.fixture
    def op(self, operator_factory):
        return operator_factory("robin", n=64, length=6.0, eta=1.0, shift=0.5)

    def test_single_eigenvector_closed_form(self, op):
        for alpha, beta in ((0.5, 0.0), (0.75, 0.25), (1.0, 0.5)):
            for j in (0, 7, 30):
                lam, gap = op.eigenvalues[j], op.eigenvalues[j] - op.shift
                a = alpha - beta
                t_star = a / gap
                closed = lam**a * t_star**a * math.exp(-gap * t_star)
                times = np.concatenate([np.geomspace(1e-6, 10.0, 200), [t_star]])
                got = verify_smoothing_bound(op, alpha, beta, times, [op.eigenvectors[:, j]])
                assert got == pytest.approx(closed, rel=1e-8)

    def test_requires_alpha_above_beta(self, op):
        f = [np.ones(op.size)]
        with pytest.raises(DomainError):
            verify_smoothing_bound(op, 0.5, 0.5, [0.1], f)
        with pytest.raises(DomainError):
            verify_smoothing_bound(op, 0.25, 0.5, [0.1], f)
        with pytest.raises(DomainError):
            verify_smoothing_bound(op, 0.5, -0.1, [0.1], f)
        with pytest.raises(DomainError):
            verify_smoothing_bound(op, 0.5, 0.0, [0.0, 0.1], f)

    def test_constant_stable_toward_zero(self, op):
        rng = np.random.default_rng(5)
        samples = [rng.standard_normal(op.size) for _ in range(8)]
        coarse = verify_smoothing_bound(op, 0.75, 0.0, np.geomspace(1e-5, 10.0, 100), samples)
        fine = verify_smoothing_bound(op, 0.75, 0.0, np.geomspace(1e-5 / 4, 10.0, 400), samples)
        assert math.isfinite(coarse) and abs(fine / coarse - 1.0) < 0.1
        # every ratio is bounded by the scalar supremum of s^a e^{-s}
        assert fine <= (0.75 / math.e) ** 0.75 * max(1.0, (op.eigenvalues / (op.eigenvalues - op.shift)).max() ** 0.75)


class TestDiscreteNorms:
    def test_order_zero_is_weighted_l2(self):
        u = np.arange(1.0, 6.0)
        assert discrete_sobolev_norm(u, 0.5, 0) == pytest.approx(math.sqrt(0.5 * np.sum(u**2)))

    def test_first_order_hand_value(self):
        u = np.array([1.0, 2.0, 4.0])
        # padded 0 | 1 2 4 | 0: differences 1, 1, 2, -4
        expected = math.sqrt(0.5 * 21 + 0.5 * (1 + 1 + 4 + 16) / 0.25)
        assert discrete_sobolev_norm(u, 0.5, 1, left=0.0, right=0.0) == pytest.approx(expected)

    def test_order_out_of_range(self):
        with pytest.raises(DomainError):
            discrete_sobolev_norm(np.ones(4), 0.1, 3)

    def test_norms_increase_with_order(self, operator_factory):
        op = operator_factory("dirichlet", n=50, length=5.0)
        f = np.sin(op.grid.nodes)
        assert op.sobolev_norm(f, 0) < op.sobolev_norm(f, 1) < op.sobolev_norm(f, 2)

    def test_trace_and_slope_exact_on_quadratics(self):
        h = 0.1
        x = h * np.arange(1, 6)
        u = 2.0 - 3.0 * x + 5.0 * x**2
        assert boundary_trace(u) == pytest.approx(2.0, abs=1e-12)
        assert boundary_slope(u, h, "robin") == pytest.approx(-3.0, abs=1e-10)
        v = -3.0 * x + 5.0 * x**2  # vanishes at 0
        assert boundary_slope(v, h, "dirichlet") == pytest.approx(-3.0, abs=1e-10)
