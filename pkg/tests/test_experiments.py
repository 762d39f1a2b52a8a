import math
import warnings

import numpy as np
import pytest

from stochstefan.config import parse_config, problem_spec
from stochstefan.errors import ConfigurationError, RangeWarning
from stochstefan.experiments import (
    ProblemSpec,
    batch_mean,
    ensemble_map,
    exit_family_check,
    exit_time_consistency,
    heat_baseline_deficit,
    initial_state,
    ode_reduction_check,
    phase_separation_experiment,
    recenter,
    reconstruct_physical,
    simulate,
    synthetic_exit_families,
    validate_assumptions,
    wz_convergence_study,
)
from stochstefan.solvers import SolverConfig, Trajectory
from stochstefan.spectral import boundary_trace, build_grid

GAUSSIAN = {"name": "gaussian_convolution", "width": 1.2, "y_support": 15.0, "normalized": True}
ZERO = {"name": "zero"}


def small_spec(kernel=GAUSSIAN, n_modes=8, initial=None, boundary="robin", n_points=24, **coefficients):
    slots = {"mu_plus": ZERO, "mu_minus": ZERO, "sigma_plus": ZERO, "sigma_minus": ZERO, "rho": ZERO}
    slots.update(coefficients)
    operator = {"boundary": boundary, "shift": 1.0}
    if boundary == "robin":
        operator.update(kappa_plus=1.0, kappa_minus=1.0)
    return ProblemSpec(
        grid={"length": 6.0, "n_points": n_points},
        operator=operator,
        coefficients=slots,
        kernel=kernel,
        noise={"n_modes": n_modes},
        initial=initial or {"name": "bump", "amplitude_plus": 0.5, "amplitude_minus": 0.4},
    )


NOISY = {
    "mu_plus": {"name": "logistic", "rate": 0.2, "capacity": 5.0},
    "sigma_plus": {"name": "gaussian_linear", "scale": 1.0, "width": 3.0},
    "sigma_minus": {"name": "gaussian_linear", "scale": 1.0, "width": 3.0},
    "rho": {"name": "stefan", "k": 0.5},
}


class TestPlumbing:
    def test_batch_mean_closed_form(self):
        mean, se = batch_mean(np.arange(20.0), 10)
        batch_means = np.arange(10) * 2 + 0.5
        assert mean == 9.5
        assert se == pytest.approx(np.std(batch_means, ddof=1) / math.sqrt(10), rel=1e-14)

    def test_batch_mean_degenerate_inputs(self):
        assert all(math.isnan(v) for v in batch_mean([]))
        mean, se = batch_mean([3.0])
        assert mean == 3.0 and math.isnan(se)

    def test_ensemble_map_is_ordered_across_workers(self):
        tasks = [float(i) for i in range(7)]
        assert ensemble_map(math.sqrt, tasks, 1) == ensemble_map(math.sqrt, tasks, 2) == [math.sqrt(t) for t in tasks]

    def test_unknown_initial_condition(self):
        with pytest.raises(ConfigurationError, match="bump"):
            initial_state(build_grid(1.0, 4), "spike", {})

    def test_unknown_initial_parameter(self):
        with pytest.raises(ConfigurationError):
            initial_state(build_grid(1.0, 4), "bump", {"height": 2.0})

    def test_spec_builds_are_cached_by_content(self):
        a, b = small_spec(**NOISY), small_spec(**NOISY)
        assert a.build() is b.build()

    def test_simulate_is_deterministic(self):
        spec = small_spec(**NOISY)
        config = SolverConfig(0.125, 1 / 256, "wong_zakai", m=8, stride=8)
        one, two = simulate(spec, config, seed=4, sample=2), simulate(spec, config, seed=4, sample=2)
        assert np.array_equal(one.snapshots, two.snapshots)
        assert not np.array_equal(one.snapshots, simulate(spec, config, seed=4, sample=3).snapshots)


class TestConvergenceStudy:
    def test_noise_free_errors_vanish(self):
        spec = small_spec(kernel=None, mu_plus=NOISY["mu_plus"], rho=NOISY["rho"])
        report = wz_convergence_study(spec, 0.125, 1 / 256, [2, 8], [1, 4], 30)
        for key, errors in report.errors.items():
            assert np.all(errors == 0.0), key
        assert report.passed and report.effective_modes is None

    def test_rank_one_kernel_has_no_mode_truncation_error(self):
        kernel = {"name": "separable", "y_support": 15.0, "shape": "gaussian", "width": 2.0}
        spec = small_spec(kernel=kernel, n_modes=4, sigma_plus=NOISY["sigma_plus"], sigma_minus=NOISY["sigma_minus"])
        report = wz_convergence_study(spec, 0.125, 1 / 256, [2, 8], [1, 4], 30, seed=3)
        for m in (2, 8):
            np.testing.assert_allclose(report.errors[(m, 1)], report.errors[(m, 4)], rtol=1e-6, atol=1e-14)
        assert report.effective_modes == pytest.approx(1.0, abs=1e-6)
        assert report.estimate(8, 1)[0] < report.estimate(2, 1)[0]

    def test_report_layout(self):
        spec = small_spec(**NOISY)
        report = wz_convergence_study(spec, 0.125, 1 / 256, [2, 8], [2, 8], 30, seed=1)
        assert np.array(report.matrix()).shape == (2, 2)
        assert all(e >= 0 for row in report.matrix() for e in row)
        assert all(s > 0 for row in report.matrix("standard_error") for s in row)
        payload = report.to_dict()
        assert {"m", "n", "estimate", "standard_error"} <= set(payload["estimates"][0])
        assert not report.insufficient

    @pytest.mark.parametrize(
        "args",
        [
            {"m_list": [8, 2]},
            {"n_list": [4, 4]},
            {"samples": 29},
            {"p": 0.5},
            {"m_list": [3]},
        ],
    )
    def test_rejections(self, args):
        kwargs = {"m_list": [2, 8], "n_list": [1], "samples": 30, **args}
        with pytest.raises(ConfigurationError):
            wz_convergence_study(small_spec(**NOISY), 0.125, 1 / 256, **kwargs)


class TestPhaseSeparation:
    def test_heat_baseline_is_positive(self):
        spec = small_spec(boundary="dirichlet", n_points=48)
        assert heat_baseline_deficit(spec, 0.5, 1 / 512) <= 1e-12

    def test_violating_drift_is_detected(self):
        spec = small_spec(
            boundary="dirichlet", n_points=32,
            initial={"name": "shifted_ramp", "offset": 1.0},
            mu_plus={"name": "constant", "value": -1.0},
            sigma_plus={"name": "linear"}, sigma_minus={"name": "linear"},
        )
        report = phase_separation_experiment(spec, 0.125, 1 / 256, 3, 8, require_inward_pointing=False)
        assert not report.passed
        witness = report.violations[0]
        assert witness["margin"] < -report.tolerance and witness["time"] > 0.0
        assert {"scheme", "sample"} <= set(witness)

    def test_refuses_outward_coefficients(self):
        spec = small_spec(boundary="dirichlet", mu_plus={"name": "constant", "value": -1.0})
        with pytest.raises(ConfigurationError, match="inward"):
            phase_separation_experiment(spec, 0.125, 1 / 256, 2, 8)

    def test_refuses_unseparated_initial_state(self):
        spec = small_spec(boundary="dirichlet", initial={"name": "bump", "amplitude_plus": -1.0})
        with pytest.raises(ConfigurationError, match="separated"):
            phase_separation_experiment(spec, 0.125, 1 / 256, 2, 8)

    def test_parallel_noise_small_ensemble(self):
        spec = small_spec(boundary="dirichlet", n_points=32, sigma_plus={"name": "linear"},
                          sigma_minus={"name": "linear"}, rho={"name": "stefan", "k": 0.5})
        report = phase_separation_experiment(spec, 0.125, 1 / 256, 4, 8, seed=5)
        assert report.passed, report.violations
        assert report.tolerance >= 6.0 / 32 * 6.0 / 32 + 1 / 256


class TestExitFamilies:
    def test_synthetic_families_pass(self):
        for fam in synthetic_exit_families():
            report = exit_family_check(fam["name"], fam["times"], fam["members"], fam["limit"], fam["radius"], 0.05,
                                       require_eligible=True)
            assert report.passed, (fam["name"], report.checks)

    def test_tangent_limit_has_distinct_exits(self):
        fam = next(f for f in synthetic_exit_families() if f["name"] == "tangent_from_below")
        report = exit_family_check(fam["name"], fam["times"], fam["members"], fam["limit"], 1.0, 0.05)
        open_exit, closed_exit = report.limit_exits
        assert open_exit == pytest.approx(0.4) and closed_exit > 0.8
        # members from below never reach the tangency level: their open exit is late
        assert all(s > open_exit for s, _ in report.member_exits)

    def test_transversal_limit_exits_agree(self):
        fam = next(f for f in synthetic_exit_families() if f["name"] == "transversal_from_above")
        report = exit_family_check(fam["name"], fam["times"], fam["members"], fam["limit"], 1.0, 0.05)
        # both exits land on the first grid time at or beyond the crossing
        step = fam["times"][1] - fam["times"][0]
        assert 0.5 - step <= report.limit_exits[0] <= report.limit_exits[1] <= 0.5 + 1.01 * step
        assert report.member_exits[-1][0] == pytest.approx(0.5, abs=1e-3)

    def test_constant_family_never_exits(self):
        fam = next(f for f in synthetic_exit_families() if f["name"] == "constant_inside")
        report = exit_family_check(fam["name"], fam["times"], fam["members"], fam["limit"], 1.0, 0.05)
        assert set(report.limit_exits) == {1.0}
        # member 0 sits at 0.5 + 1/2, exactly on the level, so its open exit is 0
        assert report.member_exits[0] == (0.0, 1.0)
        assert all(set(e) == {1.0} for e in report.member_exits[1:])

    def test_recorded_families(self):
        spec = small_spec(**NOISY)
        reports = exit_time_consistency(spec, 0.125, 1 / 256, (2, 8, 32), families=3, synthetic=False, seed=2)
        assert len(reports) == 3
        for report in reports:
            assert report.passed, report.checks
            assert 0 <= report.limit_exits[0] <= report.limit_exits[1] <= 0.125


class TestOdeReduction:
    def test_zero_noise_everything_coincides(self):
        result = ode_reduction_check(sigma=0.0, samples=20, m_list=(16, 64), ito_levels=(64, 256), fine_steps=1024)
        assert all(result["checks"].values())
        assert max(result["ito_strong_errors"]) == 0.0 and max(result["wz_uniform_gap"]) == 0.0

    def test_coupled_samples_improve_with_m(self):
        result = ode_reduction_check(sigma=0.5, samples=200, m_list=(16, 256), ito_levels=(64, 128, 256, 512),
                                     fine_steps=4096, seed=1)
        assert result["wz_fraction_improved"] >= 0.95
        assert result["checks"]["wz_gap_decreasing"]

    def test_uncorrected_scheme_lands_on_the_shifted_law(self):
        result = ode_reduction_check(sigma=0.5, samples=200, m_list=(64,), ito_levels=(64, 256), fine_steps=4096, seed=2)
        shift = result["stratonovich_shift"]
        assert shift == pytest.approx(0.125)
        assert abs(result["uncorrected_mean_log_gap"][0] - shift) <= 0.1 * shift
        assert abs(result["corrected_mean_log_gap"][0]) <= 0.1 * shift

    def test_levels_must_divide_fine_grid(self):
        with pytest.raises(ConfigurationError):
            ode_reduction_check(m_list=(3,), fine_steps=1024)


def _trajectory(grid, states, times):
    snaps = np.asarray(states)
    return Trajectory(np.asarray(times), np.zeros(len(times)), np.asarray(times), snaps, "completed", times[-1])


class TestLabFrame:
    def test_centered_interface_glues_reflected_left_phase(self):
        grid = build_grid(4.0, 40)
        x = grid.nodes
        u1, u2 = x * np.exp(-x), -x**2 * np.exp(-x)
        traj = _trajectory(grid, [np.concatenate([u1, u2, [0.0]])], [0.0])
        field = reconstruct_physical(grid, traj, np.concatenate([-x[::-1], [0.0], x]))[0]
        np.testing.assert_allclose(field[41:], u1, atol=1e-15)
        np.testing.assert_allclose(field[:40], u2[::-1], atol=1e-15)
        assert field[40] == boundary_trace(u1)

    def test_moving_interface_translates_rigidly(self):
        grid = build_grid(4.0, 40)
        x = grid.nodes
        u1 = np.exp(-((x - 2.0) ** 2))
        states = [np.concatenate([u1, -u1, [t]]) for t in (0.0, 0.5, 1.0)]
        lab = np.linspace(-6.0, 6.0, 1201)
        fields = reconstruct_physical(grid, _trajectory(grid, states, [0.0, 0.5, 1.0]), lab)
        peaks = lab[np.argmax(fields, axis=1)]
        np.testing.assert_allclose(peaks, [2.0, 2.5, 3.0], atol=0.011)
        np.testing.assert_allclose(fields[2][100:], fields[0][:-100], atol=1e-12)

    def test_round_trip_is_second_order(self):
        errors = []
        for n in (40, 80, 160):
            grid = build_grid(4.0, n)
            x = grid.nodes
            u1 = x * np.exp(-x) * (2 + np.sin(3 * x))
            u2 = -x * np.exp(-x / 2)
            lab = np.linspace(-5.0, 5.0, 2 * n + 7)
            field = reconstruct_physical(grid, _trajectory(grid, [np.concatenate([u1, u2, [0.3]])], [0.0]), lab)[0]
            back = recenter(grid, lab, field, 0.3)
            interior = x < 3.5
            errors.append(max(np.abs(back.u1 - u1)[interior].max(), np.abs(back.u2 - u2)[interior].max()))
        assert errors[0] / errors[1] > 3.0 and errors[1] / errors[2] > 3.0

    def test_short_lab_grid_warns(self):
        grid = build_grid(4.0, 10)
        traj = _trajectory(grid, [np.zeros(21)], [0.0])
        with pytest.warns(RangeWarning):
            reconstruct_physical(grid, traj, np.linspace(-1.0, 1.0, 5))
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            reconstruct_physical(grid, traj, np.linspace(-5.0, 5.0, 5))


class TestAssumptionAudit:
    def test_inward_fixture_passes(self):
        spec = problem_spec(parse_config("configs/validate_assumptions.toml"))
        report = validate_assumptions(spec)
        assert report.passed, [e for e in report.to_dict()["entries"] if e["verdict"] == "fail"]

    def test_violating_fixture_fails(self):
        spec = problem_spec(parse_config("configs/phase_separation_violating.toml"))
        assert validate_assumptions(spec).verdict("mu_plus_inward") == "fail"
