"""Evolution-equation coefficients on the state space ``L2 + L2 + R``.

A state ``X = (u1, u2, x_star)`` is stored as a flat vector of length
``2n + 1``.  With ``-A = diag(-eta_+ Lap, -eta_- Lap, 0) + c`` the system reads

    dX = [A X + B(X)] dt + sum_k sigma_k(X) d beta_k,

where

    B(X) = ( mu_1(x, u1, u1') + u1' rho(I(u)),
             mu_2(x, u2, u2') - u2' rho(I(u)),
             rho(I(u)) ) + c X,
    sigma_k(X) = ( sigma_1(x, u1) T_zeta e_k(x_star + x),
                   sigma_2(x, u2) T_zeta e_k(x_star - x),
                   0 ).

``I(u)`` is the pair of one-sided slopes at the interface (Dirichlet) or the
pair of boundary traces (Robin).  The Wong-Zakai correction subtracts

    Sigma_inf(X) = 1/2 ( d_y sigma_1 sigma_1 ||zeta(x_star + x, .)||^2,
                         d_y sigma_2 sigma_2 ||zeta(x_star - x, .)||^2,
                         0 ),

the limit of the finite sums ``Sigma_n = 1/2 sum_{k<n} D sigma_k sigma_k``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .coefficients import CoefficientSet
from .errors import ConfigurationError, NumericalError
from .noise import NoiseBasis
from .spectral import (
    HalfLineGrid,
    SpectralOperator,
    assemble_operator,
    boundary_slope,
    boundary_trace,
)

__all__ = [
    "SystemState",
    "TruncationProfile",
    "MovingBoundarySystem",
    "build_system",
    "interface_velocity",
    "assemble_drift",
    "noise_mode",
    "correction_sigma_n",
    "correction_sigma_inf",
    "truncate_factor",
    "nagumo_defect",
    "phase_separation_margin",
    "in_cone",
    "wz_vector_field",
]


@dataclass(frozen=True, eq=False)
class SystemState:
    u1: NDArray[np.float64]
    u2: NDArray[np.float64]
    x_star: float

    def __post_init__(self) -> None:
        u1 = np.asarray(self.u1, dtype=float)
        u2 = np.asarray(self.u2, dtype=float)
        if u1.shape != u2.shape or u1.ndim != 1:
            raise ConfigurationError("u1 and u2 must be 1-d fields on the same grid")
        if not (np.all(np.isfinite(u1)) and np.all(np.isfinite(u2)) and math.isfinite(self.x_star)):
            raise NumericalError("state contains non-finite values")
        object.__setattr__(self, "u1", u1)
        object.__setattr__(self, "u2", u2)
        object.__setattr__(self, "x_star", float(self.x_star))

    def to_vector(self) -> NDArray[np.float64]:
        return np.concatenate([self.u1, self.u2, [self.x_star]])

    @classmethod
    def from_vector(cls, v: ArrayLike) -> "SystemState":
        v = np.asarray(v, dtype=float)
        n = (v.size - 1) // 2
        return cls(v[:n].copy(), v[n : 2 * n].copy(), float(v[-1]))


# ---------------------------------------------------------------------------
# Truncation


def _bump(t):
    """Smooth step from 1 (t <= 0) to 0 (t >= 1) and its first two derivatives."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    inner = (t > 0) & (t < 1)
    s = np.where(inner, t, 0.5)
    p = np.exp(-1.0 / (1.0 - s))
    q = np.exp(-1.0 / s)
    total = p + q
    value = np.where(t <= 0, 1.0, np.where(t >= 1, 0.0, p / total))
    # d/dt log p = -1/(1-s)^2, d/dt log q = 1/s^2
    lp, lq = -1.0 / (1.0 - s) ** 2, 1.0 / s**2
    first = p * q * (lp - lq) / total**2
    # derivative of p q (lp - lq) / (p + q)^2
    dlp, dlq = -2.0 / (1.0 - s) ** 3, -2.0 / s**3
    num = p * q * (lp - lq)
    dnum = p * q * ((lp + lq) * (lp - lq) + dlp - dlq)
    dtotal = p * lp + q * lq
    second = (dnum * total - 2.0 * num * dtotal) / total**3
    return value, np.where(inner, first, 0.0), np.where(inner, second, 0.0)


@dataclass(frozen=True)
class TruncationProfile:
    """Cutoff ``h_r(s)``: 1 on ``[0, r^2]``, 0 on ``[(r+1)^2, inf)``, smooth between."""

    radius: float

    def __post_init__(self) -> None:
        if not self.radius > 0:
            raise ConfigurationError(f"truncation radius must be positive, got {self.radius!r}")

    @property
    def width(self) -> float:
        return 2.0 * self.radius + 1.0

    def _t(self, s):
        return (np.asarray(s, dtype=float) - self.radius**2) / self.width

    def value(self, s):
        return _bump(self._t(s))[0]

    def derivative(self, s):
        return _bump(self._t(s))[1] / self.width

    def second_derivative(self, s):
        return _bump(self._t(s))[2] / self.width**2

    @staticmethod
    def derivative_constant() -> float:
        """``sup |h'| + sup |h''|`` over all radii (attained as the width tends to 1)."""
        return _DERIVATIVE_CONSTANT

    @property
    def lipschitz_bound(self) -> float:
        """Lipschitz constant ``2 c (r + 1)`` of ``X -> h_r(||X||^2)``."""
        return 2.0 * self.derivative_constant() * (self.radius + 1.0)


_probe = np.linspace(0.0, 1.0, 20001)
_, _d1, _d2 = _bump(_probe)
_DERIVATIVE_CONSTANT = float(np.max(np.abs(_d1)) + np.max(np.abs(_d2)))
del _probe, _d1, _d2


# ---------------------------------------------------------------------------
# The assembled system


class MovingBoundarySystem:
    """Discrete coefficients of the centered two-phase problem.

    The vector-level methods (``drift``, ``noise_combination`` ...) act on
    flat state vectors and are what the time steppers call.  The module-level
    functions wrap them for :class:`SystemState` arguments.
    """

    def __init__(
        self,
        coefficients: CoefficientSet,
        op_plus: SpectralOperator,
        op_minus: SpectralOperator,
        basis: NoiseBasis | None = None,
        n_modes: int | None = None,
        sobolev_order: int | None = None,
    ):
        if op_plus.grid != op_minus.grid:
            raise ConfigurationError("both phases must share one grid")
        if op_plus.shift != op_minus.shift:
            raise ConfigurationError("both phases must use the same spectral shift")
        if coefficients.has_noise and basis is None:
            raise ConfigurationError("a noise basis is required when sigma is nonzero")
        self.coefficients = coefficients
        self.op_plus = op_plus
        self.op_minus = op_minus
        self.basis = basis
        self.grid: HalfLineGrid = op_plus.grid
        self.shift = op_plus.shift
        self.kind = op_plus.kind
        self.n = self.grid.n_points
        self.dim = 2 * self.n + 1
        self.x = self.grid.nodes
        self.h = self.grid.spacing
        if basis is None:
            self.n_modes = 0
        else:
            self.n_modes = basis.n_modes if n_modes is None else int(n_modes)
            if not 1 <= self.n_modes <= basis.n_modes:
                raise ConfigurationError(f"n_modes={n_modes} outside 1..{basis.n_modes}")
        self.sobolev_order = sobolev_order or (2 if self.kind == "dirichlet" else 1)
        self.weights = np.concatenate([op_plus.weights, op_minus.weights])
        c = coefficients
        self._mu = (c.drift(1), c.drift(-1))
        self._sigma = (c.noise(1), c.noise(-1))
        self._sigma_slope = c.noise_slope
        self._noisy = c.has_noise

    # -- layout ---------------------------------------------------------------
    def split(self, v: NDArray[np.float64]):
        return v[: self.n], v[self.n : 2 * self.n], v[-1]

    def state(self, v: NDArray[np.float64]) -> SystemState:
        return SystemState.from_vector(v)

    # -- spatial pieces ------------------------------------------------------
    def slope(self, u: NDArray[np.float64], op: SpectralOperator) -> NDArray[np.float64]:
        """Central differences with the operator's boundary values."""
        padded = np.empty(u.size + 2)
        padded[0] = op.ghost_value(u)
        padded[1:-1] = u
        padded[-1] = 0.0
        return (padded[2:] - padded[:-2]) / (2.0 * self.h)

    def interface_arguments(self, u1, u2) -> tuple[float, float]:
        if self.kind == "dirichlet":
            return boundary_slope(u1, self.h, "dirichlet"), boundary_slope(u2, self.h, "dirichlet")
        return boundary_trace(u1), boundary_trace(u2)

    def velocity(self, v: NDArray[np.float64]) -> float:
        u1, u2, _ = self.split(v)
        a, b = self.interface_arguments(u1, u2)
        value = float(self.coefficients.rho(a, b))
        if not math.isfinite(value):
            raise NumericalError(f"interface velocity is not finite (arguments {a!r}, {b!r})")
        return value

    # -- drift ----------------------------------------------------------------
    def drift(self, v: NDArray[np.float64]) -> NDArray[np.float64]:
        """``B(X)`` including the ``+ c X`` compensation."""
        u1, u2, xs = self.split(v)
        rho = self.velocity(v)
        d1 = self.slope(u1, self.op_plus)
        d2 = self.slope(u2, self.op_minus)
        out = np.empty(self.dim)
        out[: self.n] = self._mu[0](self.x, u1, d1) + d1 * rho
        out[self.n : 2 * self.n] = self._mu[1](self.x, u2, d2) - d2 * rho
        out[-1] = rho
        out += self.shift * v
        return out

    # -- noise -----------------------------------------------------------------
    def _points(self, xs: float) -> NDArray[np.float64]:
        return np.concatenate([xs + self.x, xs - self.x])

    def noise_columns(self, v, n: int | None = None, order: int = 0):
        """Kernel columns at ``x_star + x`` and ``x_star - x``, each ``(n_nodes, n)``."""
        n = self.n_modes if n is None else n
        cols = self.basis.columns(self._points(v[-1]), order=order, n=n)
        return cols[: self.n], cols[self.n :]

    def noise_amplitudes(self, v):
        u1, u2, _ = self.split(v)
        return self._sigma[0](self.x, u1), self._sigma[1](self.x, u2)

    def noise_matrix(self, v, n: int | None = None) -> NDArray[np.float64]:
        """Rows ``sigma_k(X)`` for ``k < n``."""
        n = self.n_modes if n is None else n
        out = np.zeros((n, self.dim))
        if not self._noisy or n == 0:
            return out
        s1, s2 = self.noise_amplitudes(v)
        c1, c2 = self.noise_columns(v, n)
        out[:, : self.n] = (s1[:, None] * c1).T
        out[:, self.n : 2 * self.n] = (s2[:, None] * c2).T
        return out

    def noise_combination(self, v, weights: NDArray[np.float64]) -> NDArray[np.float64]:
        """``sum_k weights[k] sigma_k(X)`` over the first ``len(weights)`` modes."""
        out = np.zeros(self.dim)
        n = len(weights)
        if not self._noisy or n == 0:
            return out
        s1, s2 = self.noise_amplitudes(v)
        c1, c2 = self.noise_columns(v, n)
        out[: self.n] = s1 * (c1 @ weights)
        out[self.n : 2 * self.n] = s2 * (c2 @ weights)
        return out

    def noise_derivative(self, v, k: int, direction) -> NDArray[np.float64]:
        """``D sigma_k(X)[direction]`` including the dependence on ``x_star``."""
        out = np.zeros(self.dim)
        if not self._noisy:
            return out
        u1, u2, _ = self.split(v)
        w1, w2, shift = self.split(np.asarray(direction, dtype=float))
        c1, c2 = self.noise_columns(v, k + 1)
        t1, t2 = self.noise_columns(v, k + 1, order=1)
        s1, s2 = self.noise_amplitudes(v)
        out[: self.n] = self._sigma_slope[0](self.x, u1) * w1 * c1[:, k] + shift * s1 * t1[:, k]
        # d/dx_star of T(x_star - x) is T'(x_star - x)
        out[self.n : 2 * self.n] = self._sigma_slope[1](self.x, u2) * w2 * c2[:, k] + shift * s2 * t2[:, k]
        return out

    # -- corrections ----------------------------------------------------------
    def _correction(self, v, energy1, energy2) -> NDArray[np.float64]:
        u1, u2, _ = self.split(v)
        s1, s2 = self.noise_amplitudes(v)
        out = np.zeros(self.dim)
        out[: self.n] = 0.5 * self._sigma_slope[0](self.x, u1) * s1 * energy1
        out[self.n : 2 * self.n] = 0.5 * self._sigma_slope[1](self.x, u2) * s2 * energy2
        return out

    def correction_finite(self, v, n: int | None = None) -> NDArray[np.float64]:
        """``Sigma_n`` from the closed-form sum of squared kernel columns."""
        if not self._noisy:
            return np.zeros(self.dim)
        c1, c2 = self.noise_columns(v, n)
        return self._correction(v, np.sum(c1**2, axis=1), np.sum(c2**2, axis=1))

    def correction_limit(self, v) -> NDArray[np.float64]:
        """``Sigma_inf`` from the kernel norms ``||zeta(x_star +- x, .)||^2``."""
        if not self._noisy:
            return np.zeros(self.dim)
        norms = self.basis.kernel_norm_squared(self._points(v[-1]))
        return self._correction(v, norms[: self.n], norms[self.n :])

    def correction_abstract(self, v, n: int | None = None) -> NDArray[np.float64]:
        """``1/2 sum_k D sigma_k(X)[sigma_k(X)]`` through the general derivative."""
        n = self.n_modes if n is None else n
        rows = self.noise_matrix(v, n)
        total = np.zeros(self.dim)
        for k in range(n):
            total += self.noise_derivative(v, k, rows[k])
        return 0.5 * total

    # -- linear part and norms ----------------------------------------------------
    def propagate(self, dt: float, v: NDArray[np.float64]) -> NDArray[np.float64]:
        """Apply ``S_dt`` to every component."""
        out = np.empty(self.dim)
        out[: self.n] = self.op_plus.propagator(dt) @ v[: self.n]
        out[self.n : 2 * self.n] = self.op_minus.propagator(dt) @ v[self.n : 2 * self.n]
        out[-1] = math.exp(-self.shift * dt) * v[-1]
        return out

    def exit_norm(self, v: NDArray[np.float64], order: int | None = None) -> float:
        """``||u1||_{H^k} + ||u2||_{H^k} + |x_star|``."""
        k = self.sobolev_order if order is None else order
        u1, u2, xs = self.split(v)
        return self.op_plus.sobolev_norm(u1, k) + self.op_minus.sobolev_norm(u2, k) + abs(xs)

    def alpha_coefficients(self, v, alpha: float):
        u1, u2, xs = self.split(v)
        c1 = self.op_plus.eigenvalues**alpha * self.op_plus.coefficients(u1)
        c2 = self.op_minus.eigenvalues**alpha * self.op_minus.coefficients(u2)
        return c1, c2, xs

    def alpha_inner(self, v, w, alpha: float) -> float:
        a1, a2, a3 = self.alpha_coefficients(v, alpha)
        b1, b2, b3 = self.alpha_coefficients(w, alpha)
        return float(a1 @ b1 + a2 @ b2 + a3 * b3)

    def alpha_norm_squared(self, v, alpha: float) -> float:
        return self.alpha_inner(v, v, alpha)

    # -- truncation -------------------------------------------------------------
    def truncated_correction(self, v, profile: TruncationProfile, alpha: float, n: int | None = None):
        """Correction of the truncated noise ``h_r(||X||_alpha^2) sigma_k``.

        Differentiating ``h sigma_k`` along ``h sigma_k`` gives
        ``h^2 Sigma + h h' sum_k <sigma_k, X>_alpha sigma_k`` after the factor 1/2.
        The limit correction stands in for ``Sigma`` and the retained modes for
        the infinite sum.
        """
        s = self.alpha_norm_squared(v, alpha)
        h = float(profile.value(s))
        if h == 0.0:
            return np.zeros(self.dim)
        out = h * h * self.correction_limit(v)
        dh = float(profile.derivative(s))
        if dh != 0.0:
            rows = self.noise_matrix(v, n)
            for row in rows:
                out += h * dh * self.alpha_inner(row, v, alpha) * row
        return out


def build_system(
    grid: HalfLineGrid,
    coefficients: CoefficientSet,
    shift: float,
    basis: NoiseBasis | None = None,
    n_modes: int | None = None,
    sobolev_order: int | None = None,
) -> MovingBoundarySystem:
    """Assemble both phase operators and wrap them with the coefficients."""
    op_plus = assemble_operator(grid, coefficients.boundary, coefficients.eta_plus, shift, phase=1)
    op_minus = assemble_operator(grid, coefficients.boundary, coefficients.eta_minus, shift, phase=-1)
    return MovingBoundarySystem(coefficients, op_plus, op_minus, basis, n_modes, sobolev_order)


# ---------------------------------------------------------------------------
# State-level API


def interface_velocity(state: SystemState, system: MovingBoundarySystem) -> float:
    return system.velocity(state.to_vector())


def assemble_drift(state: SystemState, system: MovingBoundarySystem) -> SystemState:
    return SystemState.from_vector(system.drift(state.to_vector()))


def noise_mode(state: SystemState, system: MovingBoundarySystem, k: int) -> SystemState:
    """``sigma_k(X)`` for the zero-based mode ``k``."""
    return SystemState.from_vector(system.noise_matrix(state.to_vector(), k + 1)[k])


def correction_sigma_n(state: SystemState, system: MovingBoundarySystem, n: int) -> SystemState:
    return SystemState.from_vector(system.correction_finite(state.to_vector(), n))


def correction_sigma_inf(state: SystemState, system: MovingBoundarySystem) -> SystemState:
    return SystemState.from_vector(system.correction_limit(state.to_vector()))


def truncate_factor(state: SystemState, profile: TruncationProfile, system: MovingBoundarySystem, alpha: float) -> float:
    """``h_r(||u1||_alpha^2 + ||u2||_alpha^2 + x_star^2)``."""
    if not 0 <= alpha < 1:
        raise ConfigurationError(f"truncation exponent alpha must lie in [0, 1), got {alpha!r}")
    return float(profile.value(system.alpha_norm_squared(state.to_vector(), alpha)))


def nagumo_defect(
    state: SystemState,
    drift: Callable[[SystemState], SystemState],
    eps: float,
    weights: ArrayLike,
) -> float:
    """``dist(X + eps F(X), M) / eps`` in the weighted ``L2`` norm.

    The nearest point of the cone clips ``u1`` at 0 from below and ``u2`` at
    0 from above; ``weights`` is the mass diagonal of one phase.
    """
    if not eps > 0:
        raise ConfigurationError(f"Nagumo step must be positive, got {eps!r}")
    step = drift(state)
    w = np.asarray(weights, dtype=float)
    moved1 = state.u1 + eps * step.u1
    moved2 = state.u2 + eps * step.u2
    below = np.minimum(moved1, 0.0)
    above = np.maximum(moved2, 0.0)
    return float(np.sqrt(np.dot(w * below, below) + np.dot(w * above, above)) / eps)


def phase_separation_margin(state: SystemState) -> tuple[float, float]:
    """``(min u1, max u2)``; the state is separated iff ``min u1 >= 0 >= max u2``."""
    return float(np.min(state.u1)), float(np.max(state.u2))


def in_cone(state: SystemState, tolerance: float | None = None) -> bool:
    """Cone membership up to ``10 * eps * ||state||_inf`` by default."""
    if tolerance is None:
        scale = max(np.max(np.abs(state.u1)), np.max(np.abs(state.u2)), abs(state.x_star))
        tolerance = 10.0 * np.finfo(float).eps * scale
    low, high = phase_separation_margin(state)
    return low >= -tolerance and high <= tolerance


def wz_vector_field(
    system: MovingBoundarySystem, slopes: ArrayLike, corrected: bool = True
) -> Callable[[SystemState], SystemState]:
    """Right-hand side ``B - Sigma_inf + sum_k sigma_k slope_k`` for fixed slopes."""
    slopes = np.asarray(slopes, dtype=float)

    def field(state: SystemState) -> SystemState:
        v = state.to_vector()
        out = system.drift(v) + system.noise_combination(v, slopes)
        if corrected:
            out -= system.correction_limit(v)
        return SystemState.from_vector(out)

    return field
