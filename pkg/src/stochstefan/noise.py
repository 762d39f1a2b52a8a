"""Colored noise: kernels, a truncated trigonometric basis and Brownian drivers.

The noise is ``xi = T_zeta W`` with ``T_zeta w(x) = int zeta(x, y) w(y) dy`` and
a cylindrical Wiener process ``W = sum_k e_k beta_k``.  The basis ``e_k`` is
the orthonormal trigonometric family on ``[-L_y, L_y]``:

    e_0 = 1 / sqrt(2 L_y),
    e_{2j-1} = cos(j pi y / L_y) / sqrt(L_y),
    e_{2j}   = sin(j pi y / L_y) / sqrt(L_y).

Integrals over ``y`` use composite Simpson on an odd number of equispaced
nodes.  Simpson is a combination of two trapezoid rules, which are exact
for trigonometric polynomials of low enough degree on a full period.  The
discrete basis is therefore orthonormal to rounding, and the discrete
Bessel inequality holds without quadrature slack.

Columns ``T_zeta e_k`` and their ``x``-derivatives are tabulated on a fine
``x``-grid and evaluated elsewhere by cubic splines.

Brownian drivers hold one fine path per seed.  Every piecewise-linear
interpolant ``beta^m`` is derived from that path, so Ito and Wong-Zakai runs
sharing a driver see the same randomness.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np
from numpy.polynomial import hermite_e
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .errors import ConfigurationError, DomainError, EvaluationRangeError, QuadratureWarning

__all__ = [
    "Kernel",
    "GaussianConvolutionKernel",
    "SeparableKernel",
    "TabulatedKernel",
    "NoiseBasis",
    "BrownianDriver",
    "Interpolant",
    "simpson_weights",
    "trig_basis",
    "apply_T_zeta",
    "build_basis",
    "sample_paths",
    "interpolate",
    "parseval_defect",
    "effective_modes",
    "make_kernel",
    "KERNEL_BUILTINS",
]


def simpson_weights(n_nodes: int, spacing: float) -> NDArray[np.float64]:
    """Composite Simpson weights on ``n_nodes`` (odd) equispaced nodes."""
    if n_nodes < 3 or n_nodes % 2 == 0:
        raise ConfigurationError(f"Simpson rule needs an odd node count >= 3, got {n_nodes}")
    w = np.ones(n_nodes)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w * spacing / 3.0


def trig_basis(y: ArrayLike, n_modes: int, half_width: float) -> NDArray[np.float64]:
    """Values of the first ``n_modes`` basis functions, shape ``(len(y), n_modes)``.

    Functions vanish outside ``[-half_width, half_width]``.
    """
    y = np.asarray(y, dtype=float)
    out = np.empty(y.shape + (n_modes,))
    out[..., 0] = 1.0 / math.sqrt(2.0 * half_width)
    root = 1.0 / math.sqrt(half_width)
    for k in range(1, n_modes):
        freq = ((k + 1) // 2) * math.pi / half_width
        out[..., k] = root * (np.cos(freq * y) if k % 2 else np.sin(freq * y))
    out[np.abs(y) > half_width] = 0.0
    return out


def _gaussian_derivative(order: int, s: NDArray[np.float64], width: float) -> NDArray[np.float64]:
    """``d^order/ds^order exp(-s^2 / (2 width^2))`` via Hermite polynomials."""
    scaled = s / width
    coeffs = np.zeros(order + 1)
    coeffs[order] = 1.0
    return (-1.0 / width) ** order * hermite_e.hermeval(scaled, coeffs) * np.exp(-0.5 * scaled**2)


class Kernel:
    """Integral kernel ``zeta(x, y)`` with ``x``-derivatives.

    Subclasses implement :meth:`derivative`; ``order=0`` is the kernel itself.
    """

    kind = "general"
    max_order = 4

    def __init__(self, y_support: float, quadrature_step: float | None = None):
        if not y_support > 0:
            raise ConfigurationError(f"kernel y-support must be positive, got {y_support!r}")
        self.y_support = float(y_support)
        self._quadrature_step = quadrature_step

    def __call__(self, x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
        return self.derivative(0, x, y)

    def derivative(self, order: int, x: ArrayLike, y: ArrayLike) -> NDArray[np.float64]:
        raise NotImplementedError

    def _check_order(self, order: int) -> None:
        if not 0 <= order <= self.max_order:
            raise DomainError(f"{type(self).__name__} provides x-derivatives up to order {self.max_order}, got {order}")

    @property
    def quadrature_step(self) -> float:
        """Default spacing of the ``y``-quadrature grid."""
        return self._quadrature_step if self._quadrature_step else self.y_support / 512

    def quadrature_grid(self, step: float | None = None) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        step = step or self.quadrature_step
        intervals = max(2, int(math.ceil(2.0 * self.y_support / step)))
        intervals += intervals % 2
        y = np.linspace(-self.y_support, self.y_support, intervals + 1)
        return y, simpson_weights(intervals + 1, y[1] - y[0])

    def norm_squared(self, x: ArrayLike, order: int = 0, step: float | None = None) -> NDArray[np.float64]:
        """``||zeta^(order)(x, .)||^2`` over ``[-L_y, L_y]`` by Simpson quadrature."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        y, w = self.quadrature_grid(step)
        out = np.empty(x.shape)
        for start in range(0, x.size, 256):
            block = self.derivative(order, x[start : start + 256, None], y[None, :])
            out[start : start + 256] = (block**2) @ w
        return out


class GaussianConvolutionKernel(Kernel):
    """``zeta(x, y) = amplitude * exp(-(x - y)^2 / (2 width^2))``.

    With ``normalized=True`` the amplitude is chosen so that
    ``||zeta(x, .)||_{L2(R)} = 1``.
    """

    kind = "convolution"

    def __init__(self, width: float, y_support: float, amplitude: float = 1.0, normalized: bool = False,
                 quadrature_step: float | None = None):
        if not width > 0:
            raise ConfigurationError(f"Gaussian kernel width must be positive, got {width!r}")
        super().__init__(y_support, quadrature_step)
        self.width = float(width)
        self.amplitude = (width * math.sqrt(math.pi)) ** -0.5 if normalized else float(amplitude)

    @property
    def quadrature_step(self) -> float:
        return self._quadrature_step if self._quadrature_step else min(self.width / 24.0, self.y_support / 256)

    def derivative(self, order, x, y):
        self._check_order(order)
        s = np.asarray(x, dtype=float) - np.asarray(y, dtype=float)
        return self.amplitude * _gaussian_derivative(order, s, self.width)


class SeparableKernel(Kernel):
    """Rank-one kernel ``zeta(x, y) = profile(x) * e_0(y)``.

    ``e_0`` is the constant basis function, so ``T_zeta e_0 = profile`` and
    every other column vanishes.  ``profile`` is ``amplitude`` times either
    ``1`` (``shape="constant"``) or ``exp(-x^2 / (2 width^2))``.
    """

    def __init__(self, y_support: float, amplitude: float = 1.0, shape: str = "constant", width: float = 1.0,
                 quadrature_step: float | None = None):
        super().__init__(y_support, quadrature_step)
        if shape not in ("constant", "gaussian"):
            raise ConfigurationError(f"separable kernel shape must be 'constant' or 'gaussian', got {shape!r}")
        self.amplitude = float(amplitude)
        self.shape = shape
        self.width = float(width)

    def profile(self, order: int, x: ArrayLike) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        if self.shape == "constant":
            return np.full(x.shape, self.amplitude if order == 0 else 0.0)
        return self.amplitude * _gaussian_derivative(order, x, self.width)

    def derivative(self, order, x, y):
        self._check_order(order)
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        inside = np.abs(y) <= self.y_support
        return self.profile(order, x) * inside / math.sqrt(2.0 * self.y_support)


class TabulatedKernel(Kernel):
    """Kernel tabulated on a tensor grid, interpolated by bicubic splines.

    Cubic splines supply at most two continuous derivatives.
    """

    max_order = 2

    def __init__(self, x_nodes: ArrayLike, y_nodes: ArrayLike, values: ArrayLike, quadrature_step: float | None = None):
        x_nodes = np.asarray(x_nodes, dtype=float)
        y_nodes = np.asarray(y_nodes, dtype=float)
        values = np.asarray(values, dtype=float)
        if values.shape != (x_nodes.size, y_nodes.size):
            raise ConfigurationError("tabulated kernel values must have shape (len(x_nodes), len(y_nodes))")
        if x_nodes.size < 4 or y_nodes.size < 4:
            raise ConfigurationError("tabulated kernel needs at least 4 nodes in x and y")
        super().__init__(float(np.max(np.abs(y_nodes))), quadrature_step)
        self.x_range = (float(x_nodes[0]), float(x_nodes[-1]))
        self._spline = RectBivariateSpline(x_nodes, y_nodes, values, kx=3, ky=3)
        self._y_range = (float(y_nodes[0]), float(y_nodes[-1]))

    @classmethod
    def from_csv(cls, path: str | Path, **kwargs) -> "TabulatedKernel":
        """Read ``x,y,value`` rows covering a full tensor grid."""
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"kernel table {str(path)!r} not found")
        with path.open(newline="") as handle:
            rows = [r for r in csv.reader(handle) if r and not r[0].lstrip().startswith("#")]
        try:
            data = np.array([[float(v) for v in r[:3]] for r in rows if _is_number(r[0])])
        except (ValueError, IndexError) as exc:
            raise ConfigurationError(f"kernel table {str(path)!r} is not x,y,value numeric CSV") from exc
        if data.ndim != 2 or data.shape[1] != 3:
            raise ConfigurationError(f"kernel table {str(path)!r} has no numeric x,y,value rows")
        xs, ys = np.unique(data[:, 0]), np.unique(data[:, 1])
        if xs.size * ys.size != data.shape[0]:
            raise ConfigurationError(f"kernel table {str(path)!r} does not cover a full tensor grid")
        grid = np.full((xs.size, ys.size), np.nan)
        grid[np.searchsorted(xs, data[:, 0]), np.searchsorted(ys, data[:, 1])] = data[:, 2]
        return cls(xs, ys, grid, **kwargs)

    def derivative(self, order, x, y):
        self._check_order(order)
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        out = self._spline(x.ravel(), y.ravel(), dx=order, grid=False).reshape(x.shape)
        outside = (y < self._y_range[0]) | (y > self._y_range[1])
        out[outside] = 0.0
        return out


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


KERNEL_BUILTINS = ("gaussian_convolution", "separable", "tabulated")


def make_kernel(name: str, params: dict) -> Kernel:
    """Build a kernel from its configuration name and parameters."""
    params = dict(params)
    try:
        if name == "gaussian_convolution":
            return GaussianConvolutionKernel(**params)
        if name == "separable":
            return SeparableKernel(**params)
        if name == "tabulated":
            path = params.pop("path")
            return TabulatedKernel.from_csv(path, **params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for kernel {name!r}: {exc}") from exc
    except KeyError as exc:
        raise ConfigurationError(f"kernel {name!r} requires parameter {exc.args[0]!r}") from exc
    raise ConfigurationError(f"unknown kernel {name!r}; available: {', '.join(KERNEL_BUILTINS)}")


@dataclass(eq=False)
class NoiseBasis:
    """Truncated basis with tabulated kernel columns.

    ``columns(x, order)`` returns ``T_{zeta^(order)} e_k(x)`` for all retained
    modes, shape ``(len(x), n_modes)``.
    """

    kernel: Kernel
    n_modes: int
    eval_range: tuple[float, float]
    eval_grid: NDArray[np.float64]
    quad_nodes: NDArray[np.float64]
    quad_weights: NDArray[np.float64]
    basis_values: NDArray[np.float64]
    tables: tuple[NDArray[np.float64], ...]
    norm_table: NDArray[np.float64]

    def __post_init__(self) -> None:
        self._splines = [CubicSpline(self.eval_grid, t, axis=0) for t in self.tables]
        self._norm_spline = CubicSpline(self.eval_grid, self.norm_table)

    @property
    def derivative_orders(self) -> int:
        return len(self.tables) - 1

    def _check_range(self, x: NDArray[np.float64]) -> None:
        lo, hi = self.eval_range
        if x.size and (x.min() < lo - 1e-12 or x.max() > hi + 1e-12):
            raise EvaluationRangeError(
                f"noise basis evaluated at [{x.min():.6g}, {x.max():.6g}] outside its range [{lo:.6g}, {hi:.6g}];"
                " enlarge the evaluation range"
            )

    def columns(self, x: ArrayLike, order: int = 0, n: int | None = None) -> NDArray[np.float64]:
        x = np.asarray(x, dtype=float)
        self._check_range(x)
        if order > self.derivative_orders:
            raise DomainError(f"basis tabulates derivatives up to order {self.derivative_orders}, got {order}")
        values = self._splines[order](x)
        return values if n is None else values[..., :n]

    def kernel_norm_squared(self, x: ArrayLike) -> NDArray[np.float64]:
        """Interpolated ``||zeta(x, .)||^2``."""
        x = np.asarray(x, dtype=float)
        self._check_range(x)
        return self._norm_spline(x)

    def project(self, w: Callable[[NDArray[np.float64]], ArrayLike]) -> NDArray[np.float64]:
        """Basis coefficients of ``w`` restricted to ``[-L_y, L_y]``."""
        values = np.asarray(w(self.quad_nodes), dtype=float)
        return (self.quad_weights * values) @ self.basis_values

    def direct_columns(self, x: ArrayLike, order: int = 0) -> NDArray[np.float64]:
        """``T_{zeta^(order)} e_k(x)`` by quadrature, bypassing the tables."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        block = self.kernel.derivative(order, x[:, None], self.quad_nodes[None, :])
        return (block * self.quad_weights) @ self.basis_values


def build_basis(
    kernel: Kernel,
    n_modes: int,
    eval_range: tuple[float, float],
    eval_resolution: float,
    derivative_orders: int = 2,
    quadrature_step: float | None = None,
) -> NoiseBasis:
    """Tabulate ``T_{zeta^(i)} e_k`` for ``i <= derivative_orders`` on ``eval_range``."""
    if int(n_modes) != n_modes or n_modes < 1:
        raise ConfigurationError(f"number of noise modes must be a positive integer, got {n_modes!r}")
    lo, hi = map(float, eval_range)
    if not hi > lo:
        raise ConfigurationError(f"evaluation range must satisfy lo < hi, got {eval_range!r}")
    if not eval_resolution > 0:
        raise ConfigurationError(f"evaluation resolution must be positive, got {eval_resolution!r}")
    derivative_orders = min(derivative_orders, kernel.max_order)
    points = max(8, int(math.ceil((hi - lo) / eval_resolution)) + 1)
    grid = np.linspace(lo, hi, points)
    y, w = kernel.quadrature_grid(quadrature_step)
    basis_values = trig_basis(y, n_modes, kernel.y_support)
    weighted_basis = w[:, None] * basis_values

    tables = [np.empty((points, n_modes)) for _ in range(derivative_orders + 1)]
    norms = np.empty(points)
    for start in range(0, points, 256):
        rows = slice(start, start + 256)
        for order in range(derivative_orders + 1):
            block = kernel.derivative(order, grid[rows, None], y[None, :])
            tables[order][rows] = block @ weighted_basis
            if order == 0:
                norms[rows] = (block**2) @ w
    return NoiseBasis(
        kernel=kernel,
        n_modes=int(n_modes),
        eval_range=(lo, hi),
        eval_grid=grid,
        quad_nodes=y,
        quad_weights=w,
        basis_values=basis_values,
        tables=tuple(tables),
        norm_table=norms,
    )


def apply_T_zeta(
    kernel: Kernel,
    w: Callable[[NDArray[np.float64]], ArrayLike] | ArrayLike,
    x_points: ArrayLike,
    basis: NoiseBasis | None = None,
    tolerance: float = 1e-8,
) -> NDArray[np.float64]:
    """``T_zeta w`` at ``x_points``.

    ``w`` is either a callable of ``y`` or a vector of basis coefficients
    (which requires ``basis``).  For callables the Simpson result is compared
    with the rule on half as many nodes; a ``QuadratureWarning`` is issued if
    they differ by more than ``tolerance`` (relative to the value, absolute
    below 1).
    """
    x = np.atleast_1d(np.asarray(x_points, dtype=float))
    if not callable(w):
        if basis is None:
            raise ConfigurationError("basis coefficients given without a basis")
        coeffs = np.asarray(w, dtype=float)
        if coeffs.size > basis.n_modes:
            raise ConfigurationError(f"{coeffs.size} coefficients exceed the {basis.n_modes} basis modes")
        return basis.columns(x, n=coeffs.size) @ coeffs

    def rule(step: float) -> NDArray[np.float64]:
        y, weights = kernel.quadrature_grid(step)
        values = np.asarray(w(y), dtype=float) * weights
        return kernel(x[:, None], y[None, :]) @ values

    step = kernel.quadrature_step
    fine = rule(step)
    coarse = rule(2.0 * step)
    scale = np.maximum(1.0, np.abs(fine))
    if np.any(np.abs(fine - coarse) > tolerance * scale):
        warnings.warn(
            f"T_zeta quadrature changed by {np.max(np.abs(fine - coarse)):.3g} under node halving;"
            " refine the y-quadrature",
            QuadratureWarning,
            stacklevel=2,
        )
    return fine


def parseval_defect(basis: NoiseBasis, x: float, n: int | None = None) -> float:
    """``||zeta(x, .)||^2 - sum_{k < n} |T_zeta e_k(x)|^2`` by direct quadrature."""
    n = basis.n_modes if n is None else n
    block = basis.kernel(np.atleast_1d(float(x))[:, None], basis.quad_nodes[None, :])[0]
    norm2 = float((block**2) @ basis.quad_weights)
    coeffs = (block * basis.quad_weights) @ basis.basis_values[:, :n]
    return norm2 - float(coeffs @ coeffs)


def effective_modes(basis: NoiseBasis, x: ArrayLike) -> float:
    """Participation ratio of the column energies, averaged over ``x``.

    Equals ``j`` when the energy ``sum_x |T_zeta e_k(x)|^2`` is spread evenly
    over ``j`` modes.
    """
    energy = np.sum(basis.columns(np.atleast_1d(x)) ** 2, axis=0)
    total = energy.sum()
    return float(total**2 / np.sum(energy**2)) if total > 0 else 0.0


@dataclass(frozen=True, eq=False)
class BrownianDriver:
    """Fine-grid Brownian paths ``beta_k(j * fine_step)``, shape ``(n_fine + 1, n_modes)``."""

    n_modes: int
    horizon: float
    fine_step: float
    paths: NDArray[np.float64]

    @property
    def n_fine(self) -> int:
        return self.paths.shape[0] - 1

    @property
    def times(self) -> NDArray[np.float64]:
        return self.fine_step * np.arange(self.n_fine + 1)

    def increment(self, start: int, stop: int) -> NDArray[np.float64]:
        """``beta(stop * fine_step) - beta(start * fine_step)`` for fine indices."""
        return self.paths[stop] - self.paths[start]

    def interpolate(self, m: int) -> "Interpolant":
        return interpolate(self, m)


def _step_count(horizon: float, step: float, what: str) -> int:
    count = int(round(horizon / step))
    if count < 1 or abs(count * step - horizon) > 1e-9 * horizon:
        raise ConfigurationError(f"{what} {step!r} does not divide the horizon {horizon!r}")
    return count


def sample_paths(
    seed: int | np.random.SeedSequence, n_modes: int, horizon: float, fine_step: float
) -> BrownianDriver:
    """Sample independent Brownian paths with exact Gaussian increments.

    ``seed`` may be an integer or a ``SeedSequence`` (for example one child of
    a per-trajectory split).
    """
    n_fine = _step_count(horizon, fine_step, "fine time step")
    rng = np.random.Generator(np.random.PCG64(seed))
    increments = rng.standard_normal((n_fine, n_modes)) * math.sqrt(horizon / n_fine)
    paths = np.zeros((n_fine + 1, n_modes))
    np.cumsum(increments, axis=0, out=paths[1:])
    return BrownianDriver(int(n_modes), float(horizon), horizon / n_fine, paths)


@dataclass(frozen=True, eq=False)
class Interpolant:
    """Piecewise-linear interpolant ``beta^m`` of a driver on ``m`` intervals."""

    m: int
    horizon: float
    node_values: NDArray[np.float64]
    fine_per_interval: int

    @property
    def interval(self) -> float:
        return self.horizon / self.m

    @cached_property
    def slopes(self) -> NDArray[np.float64]:
        return np.diff(self.node_values, axis=0) / self.interval

    def interval_index(self, t: ArrayLike) -> NDArray[np.int64]:
        idx = np.floor(np.asarray(t, dtype=float) / self.interval + 1e-9).astype(np.int64)
        return np.clip(idx, 0, self.m - 1)

    def value(self, t: ArrayLike) -> NDArray[np.float64]:
        t = np.asarray(t, dtype=float)
        idx = self.interval_index(t)
        offset = (t - idx * self.interval)[..., None]
        return self.node_values[idx] + offset * self.slopes[idx]

    def slope(self, t: ArrayLike) -> NDArray[np.float64]:
        return self.slopes[self.interval_index(t)]

    def slope_for_fine_index(self, j: int) -> NDArray[np.float64]:
        """Slope on the interval containing the fine step that starts at index ``j``."""
        return self.slopes[min(j // self.fine_per_interval, self.m - 1)]


def interpolate(driver: BrownianDriver, m: int) -> Interpolant:
    if int(m) != m or m < 1 or driver.n_fine % m:
        raise ConfigurationError(
            f"interpolation level m={m!r} must divide the {driver.n_fine} fine steps of the driver"
        )
    stride = driver.n_fine // m
    return Interpolant(int(m), driver.horizon, driver.paths[::stride].copy(), stride)
