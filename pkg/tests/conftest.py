import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stochstefan.coefficients import CoefficientSet, make_coefficient
from stochstefan.dynamics import build_system
from stochstefan.noise import GaussianConvolutionKernel, SeparableKernel, build_basis
from stochstefan.spectral import BoundarySpec, assemble_operator, build_grid

settings.register_profile("default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def gaussian_kernel():
    return GaussianConvolutionKernel(1.2, 15.0, normalized=True)


@pytest.fixture(scope="session")
def gaussian_basis(gaussian_kernel):
    return build_basis(gaussian_kernel, 32, (-12.0, 12.0), 0.02)


@pytest.fixture(scope="session")
def rank_one_basis():
    kernel = SeparableKernel(15.0, amplitude=1.0, shape="gaussian", width=2.0)
    return build_basis(kernel, 4, (-12.0, 12.0), 0.02)


def coefficient_set(boundary=None, **names):
    """Coefficient set from ``slot=(name, params)`` pairs; unspecified slots are zero."""
    slots = {"mu_plus": "drift", "mu_minus": "drift", "sigma_plus": "noise", "sigma_minus": "noise", "rho": "interface"}
    built = {}
    for slot, role in slots.items():
        name, params = names.get(slot, ("zero", {}))
        built[slot] = make_coefficient(role, name, params)
    minus_drift = names.get("minus_drift", "direct")
    return CoefficientSet(**built, boundary=boundary or BoundarySpec(), minus_drift=minus_drift)


@pytest.fixture(scope="session")
def robin_system(gaussian_basis):
    coeffs = coefficient_set(
        BoundarySpec("robin", 1.0, 0.7),
        mu_plus=("logistic", {"rate": 0.3, "capacity": 4.0}),
        mu_minus=("bilinear", {"a": 0.2}),
        sigma_plus=("gaussian_linear", {"scale": 0.8, "width": 3.0}),
        sigma_minus=("sine", {"scale": 0.6}),
        rho=("stefan", {"k": 0.5}),
    )
    return build_system(build_grid(6.0, 48), coeffs, 1.0, gaussian_basis)


@pytest.fixture(scope="session")
def dirichlet_system(gaussian_basis):
    coeffs = coefficient_set(
        BoundarySpec("dirichlet"),
        mu_plus=("exp_source", {"amplitude": 0.0, "slope": -0.2}),
        mu_minus=("linear", {"a": -0.1, "b": 0.1}),
        sigma_plus=("quadratic", {"scale": 0.5}),
        sigma_minus=("linear", {"scale": 0.7}),
        rho=("difference", {"k": 0.3}),
    )
    return build_system(build_grid(6.0, 48), coeffs, 0.5, gaussian_basis)


def smooth_state(system, seed=0, scale=1.0):
    """A random smooth state: a few low modes per phase plus a small interface position."""
    rng = np.random.default_rng(seed)
    x = system.x
    envelope = x * np.exp(-x / 2.0)
    u1 = envelope * (1.0 + 0.3 * rng.standard_normal() * np.sin(x))
    u2 = -envelope * (1.0 + 0.3 * rng.standard_normal() * np.cos(x))
    return np.concatenate([scale * u1, scale * u2, [0.3 * rng.standard_normal()]])


@pytest.fixture
def operator_factory():
    def make(kind="dirichlet", n=64, length=np.pi, eta=1.0, shift=0.5, kappa=1.0, phase=1):
        boundary = BoundarySpec(kind, kappa, kappa) if kind == "robin" else BoundarySpec()
        return assemble_operator(build_grid(length, n), boundary, eta, shift, phase)

    return make


_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance(request):
    """Record one pass/fail line for an acceptance criterion, printed in the terminal summary."""

    def record(label: str, passed: bool, detail: str) -> bool:
        line = f"{label}: {'PASS' if passed else 'FAIL'} | {detail}"
        _ACCEPTANCE_LINES.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
