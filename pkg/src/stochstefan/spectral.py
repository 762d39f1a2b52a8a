"""Shifted Laplacian on a truncated half-line and its spectral calculus.

The half-line is replaced by ``(0, L]`` with nodes ``x_i = i*h`` for
``i = 1..n`` and ``h = L/n``.  Neither the inner boundary ``x = 0`` nor the
first node past the far end carries an unknown.  The far end is always
homogeneous Dirichlet, imposed at the ghost node ``x = L + h``.  The inner
boundary is either

* Dirichlet, ``u(0) = 0``, or
* Robin, ``u'(0) = kappa * u(0)``.  The ghost value ``u(0)`` is eliminated
  with the one-sided second-order stencil
  ``(-3 u(0) + 4 u_1 - u_2) / (2h) = kappa u(0)``.

The Robin elimination makes the first row non-symmetric.  It becomes
self-adjoint for a diagonal mass matrix ``W`` that weights every node by
``h`` except the first, whose weight is ``h (3 + 2 h kappa) / (2 + 2 h
kappa)``.  For ``kappa = 0`` this is ``1.5 h``.  All discrete ``L2`` norms use
``W``, and the eigenvectors are ``W``-orthonormal, so that

    (-A)^alpha f = V diag(lambda^alpha) V^T W f,
    S_t f        = V diag(exp(-lambda t)) V^T W f.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigurationError, DomainError, NumericalError

__all__ = [
    "HalfLineGrid",
    "BoundarySpec",
    "SpectralOperator",
    "build_grid",
    "assemble_operator",
    "fractional_power_apply",
    "semigroup_apply",
    "alpha_norm",
    "verify_smoothing_bound",
    "discrete_sobolev_norm",
    "boundary_trace",
    "boundary_slope",
]

BoundaryKind = Literal["dirichlet", "robin"]


@dataclass(frozen=True)
class HalfLineGrid:
    """Uniform grid on ``(0, length]`` shared by both phases."""

    length: float
    n_points: int

    @property
    def spacing(self) -> float:
        return self.length / self.n_points

    @property
    def nodes(self) -> NDArray[np.float64]:
        return self.spacing * np.arange(1, self.n_points + 1, dtype=float)


@dataclass(frozen=True)
class BoundarySpec:
    """Inner boundary condition for the two phases.

    ``kind="robin"`` encodes ``u'(0) = kappa * u(0)`` with ``kappa_plus`` for
    the right phase and ``kappa_minus`` for the reflected left phase.
    """

    kind: BoundaryKind = "dirichlet"
    kappa_plus: float | None = None
    kappa_minus: float | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("dirichlet", "robin"):
            raise ConfigurationError(f"unknown boundary kind {self.kind!r}; expected 'dirichlet' or 'robin'")
        if self.kind == "robin":
            for name in ("kappa_plus", "kappa_minus"):
                value = getattr(self, name)
                if value is None or not np.isfinite(value) or value <= 0:
                    raise ConfigurationError(f"robin boundary requires {name} in (0, inf), got {value!r}")

    def kappa(self, phase: int) -> float | None:
        """Robin coefficient of phase ``+1`` or ``-1``; ``None`` for Dirichlet."""
        if self.kind == "dirichlet":
            return None
        return self.kappa_plus if phase > 0 else self.kappa_minus


def build_grid(length: float, n_points: int) -> HalfLineGrid:
    """Uniform grid ``x_i = i * length / n_points``, ``i = 1..n_points``."""
    if not np.isfinite(length) or length <= 0:
        raise ConfigurationError(f"grid length must be positive, got {length!r}")
    if int(n_points) != n_points or n_points < 3:
        raise ConfigurationError(f"grid needs at least 3 points, got {n_points!r}")
    return HalfLineGrid(float(length), int(n_points))


def _robin_denominator(h: float, kappa: float) -> float:
    return 3.0 + 2.0 * h * kappa


@dataclass(frozen=True, eq=False)
class SpectralOperator:
    """Eigendecomposition of ``-A_h = -eta * Laplacian_h + c``.

    Instances are built by :func:`assemble_operator` and never mutated apart
    from a private cache of propagator matrices.
    """

    grid: HalfLineGrid
    eta: float
    shift: float
    kind: BoundaryKind
    kappa: float | None
    matrix: NDArray[np.float64]
    weights: NDArray[np.float64]
    eigenvalues: NDArray[np.float64]
    eigenvectors: NDArray[np.float64]
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self) -> int:
        return self.grid.n_points

    def coefficients(self, f: ArrayLike) -> NDArray[np.float64]:
        """Expansion coefficients ``V^T W f``."""
        f = self._check(f)
        return self.eigenvectors.T @ (self.weights[:, None] * f if f.ndim == 2 else self.weights * f)

    def synthesize(self, coefficients: NDArray[np.float64]) -> NDArray[np.float64]:
        return self.eigenvectors @ coefficients

    def propagator(self, t: float) -> NDArray[np.float64]:
        """Dense matrix of ``S_t``; cached per ``t``."""
        if t < 0:
            raise DomainError(f"semigroup time must be nonnegative, got {t!r}")
        key = float(t)
        matrix = self._cache.get(key)
        if matrix is None:
            decay = np.exp(-self.eigenvalues * key)
            matrix = (self.eigenvectors * decay) @ (self.eigenvectors.T * self.weights)
            self._cache[key] = matrix
        return matrix

    def inner(self, f: ArrayLike, g: ArrayLike) -> float:
        return float(np.dot(self.weights * np.asarray(f, float), np.asarray(g, float)))

    def l2_norm(self, f: ArrayLike) -> float:
        f = np.asarray(f, dtype=float)
        return float(np.sqrt(np.dot(self.weights * f, f)))

    def ghost_value(self, f: ArrayLike) -> NDArray[np.float64] | float:
        """Value at ``x = 0`` implied by the boundary stencil."""
        f = np.asarray(f, dtype=float)
        if self.kind == "dirichlet":
            return np.zeros(f.shape[1:]) if f.ndim > 1 else 0.0
        denom = _robin_denominator(self.grid.spacing, self.kappa)
        return (4.0 * f[0] - f[1]) / denom

    def sobolev_norm(self, f: ArrayLike, order: int) -> float:
        """Discrete ``H^order`` norm with the operator's boundary values."""
        f = np.asarray(f, dtype=float)
        return discrete_sobolev_norm(
            f, self.grid.spacing, order, weights=self.weights, left=self.ghost_value(f), right=0.0
        )

    def _check(self, f: ArrayLike) -> NDArray[np.float64]:
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.size:
            raise ConfigurationError(f"field has {f.shape[0]} values but the grid has {self.size} nodes")
        return f


def _laplacian(grid: HalfLineGrid, kind: BoundaryKind, kappa: float | None):
    n, h = grid.n_points, grid.spacing
    lap = (np.diag(np.full(n, -2.0)) + np.diag(np.ones(n - 1), 1) + np.diag(np.ones(n - 1), -1)) / h**2
    weights = np.full(n, h)
    if kind == "robin":
        denom = _robin_denominator(h, kappa)
        lap[0, 0] += 4.0 / (denom * h**2)
        lap[0, 1] -= 1.0 / (denom * h**2)
        weights[0] = h * denom / (denom - 1.0)
    return lap, weights


def assemble_operator(
    grid: HalfLineGrid, boundary: BoundarySpec, eta: float, shift: float, phase: int = 1
) -> SpectralOperator:
    """Assemble ``-A_h = -eta * Laplacian_h + shift`` for one phase and diagonalize it."""
    if not eta > 0:
        raise ConfigurationError(f"diffusivity eta must be positive, got {eta!r}")
    if not shift > 0:
        raise ConfigurationError(f"spectral shift c must be positive, got {shift!r}")
    kappa = boundary.kappa(phase)
    lap, weights = _laplacian(grid, boundary.kind, kappa)
    matrix = -eta * lap + shift * np.eye(grid.n_points)

    # W^{1/2} M W^{-1/2} is symmetric because W M is.
    root = np.sqrt(weights)
    symmetric = (root[:, None] * matrix) / root[None, :]
    symmetric = 0.5 * (symmetric + symmetric.T)
    try:
        eigenvalues, q = np.linalg.eigh(symmetric)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    if not np.all(np.isfinite(eigenvalues)):
        raise NumericalError("eigensolver returned non-finite eigenvalues")
    eigenvectors = q / root[:, None]
    return SpectralOperator(
        grid=grid,
        eta=float(eta),
        shift=float(shift),
        kind=boundary.kind,
        kappa=kappa,
        matrix=matrix,
        weights=weights,
        eigenvalues=eigenvalues,
        eigenvectors=eigenvectors,
    )


def fractional_power_apply(op: SpectralOperator, alpha: float, f: ArrayLike) -> NDArray[np.float64]:
    """``(-A_h)^alpha f``; negative ``alpha`` gives the inverse powers."""
    coeffs = op.coefficients(f)
    scale = op.eigenvalues**alpha
    return op.synthesize(scale[:, None] * coeffs if coeffs.ndim == 2 else scale * coeffs)


def semigroup_apply(op: SpectralOperator, t: float, f: ArrayLike) -> NDArray[np.float64]:
    """``S_t f = exp(t A_h) f``."""
    if t < 0:
        raise DomainError(f"semigroup time must be nonnegative, got {t!r}")
    coeffs = op.coefficients(f)
    decay = np.exp(-op.eigenvalues * t)
    return op.synthesize(decay[:, None] * coeffs if coeffs.ndim == 2 else decay * coeffs)


def alpha_norm(op: SpectralOperator, alpha: float, f: ArrayLike) -> float:
    """``||(-A_h)^alpha f||`` in the weighted discrete ``L2`` norm."""
    coeffs = op.coefficients(f)
    return float(np.sqrt(np.sum((op.eigenvalues**alpha * coeffs) ** 2)))


def verify_smoothing_bound(
    op: SpectralOperator,
    alpha: float,
    beta: float,
    t_samples: ArrayLike,
    f_samples: list[ArrayLike] | NDArray[np.float64],
) -> float:
    """Empirical constant ``sup t^(alpha-beta) e^(ct) ||S_t f||_alpha / ||f||_beta``.

    The supremum runs over every pair of sample time and sample field.
    """
    if not alpha > beta:
        raise DomainError(f"smoothing bound needs alpha > beta, got alpha={alpha!r}, beta={beta!r}")
    if beta < 0:
        raise DomainError(f"smoothing bound needs beta >= 0, got {beta!r}")
    times = np.asarray(t_samples, dtype=float)
    if np.any(times <= 0):
        raise DomainError("smoothing bound sample times must be positive")
    lam = op.eigenvalues
    best = 0.0
    for f in f_samples:
        coeffs = op.coefficients(f)
        denom = np.sqrt(np.sum((lam**beta * coeffs) ** 2))
        if denom == 0:
            continue
        weighted = (lam**alpha * coeffs) ** 2
        # ||S_t f||_alpha for all t at once: rows are times.
        numer = np.sqrt(np.exp(-2.0 * np.outer(times, lam)) @ weighted)
        ratio = times ** (alpha - beta) * np.exp(op.shift * times) * numer / denom
        best = max(best, float(np.max(ratio)))
    return best


def discrete_sobolev_norm(
    values: ArrayLike,
    spacing: float,
    order: int,
    weights: ArrayLike | None = None,
    left: float | None = None,
    right: float | None = None,
) -> float:
    """Difference-quotient ``H^order`` norm, ``order`` in ``{0, 1, 2}``.

    ``left`` and ``right`` are boundary values appended before differencing.
    ``None`` means no padding on that side, so only node-to-node
    differences enter.
    """
    if order not in (0, 1, 2):
        raise DomainError(f"Sobolev order must be 0, 1 or 2, got {order!r}")
    u = np.asarray(values, dtype=float)
    w = np.full(u.shape[0], spacing) if weights is None else np.asarray(weights, dtype=float)
    total = float(np.dot(w * u, u))
    if order == 0:
        return float(np.sqrt(total))
    parts = [u]
    if left is not None:
        parts.insert(0, np.atleast_1d(float(left)))
    if right is not None:
        parts.append(np.atleast_1d(float(right)))
    padded = np.concatenate(parts)
    first = np.diff(padded) / spacing
    total += spacing * float(np.dot(first, first))
    if order == 2:
        second = np.diff(padded, 2) / spacing**2
        total += spacing * float(np.dot(second, second))
    return float(np.sqrt(total))


def boundary_trace(values: ArrayLike) -> float:
    """Quadratic extrapolation of ``u(0)`` from the first three nodes."""
    u = np.asarray(values, dtype=float)
    return float(3.0 * u[0] - 3.0 * u[1] + u[2])


def boundary_slope(values: ArrayLike, spacing: float, kind: BoundaryKind) -> float:
    """Second-order one-sided estimate of ``u'(0)``.

    With a Dirichlet boundary the known value ``u(0) = 0`` enters the
    stencil; otherwise the quadratic through the first three nodes is
    differentiated.
    """
    u = np.asarray(values, dtype=float)
    if kind == "dirichlet":
        return float((4.0 * u[0] - u[1]) / (2.0 * spacing))
    return float((-5.0 * u[0] + 8.0 * u[1] - 3.0 * u[2]) / (2.0 * spacing))
