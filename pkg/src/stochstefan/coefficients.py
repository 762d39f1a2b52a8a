"""Problem coefficients, Nemytskii operators and assumption audits.

Coefficients are named built-ins with a parameter dictionary.  Each one
carries a symbolic expression, so partial derivatives of any order are
exact; numerical evaluation goes through ``sympy.lambdify``.

Roles and signatures:

==========  ==============  ==================================
role        arguments       meaning
==========  ==============  ==================================
drift       ``(x, y, z)``   ``mu(x, u, u_x)``
noise       ``(x, y)``      ``sigma(x, u)``
interface   ``(a, b)``      ``rho`` of the two boundary traces
==========  ==============  ==================================

The left phase is simulated in reflected coordinates.  Its coefficients are
obtained from the user-facing ``mu_minus`` and ``sigma_minus`` by

    mu_2(x, y, z)  = s * mu_minus(-x, y, -z),   s = +1 ("direct") or -1 ("negated"),
    sigma_2(x, y)  = sigma_minus(-x, y).

The default ``"direct"`` keeps the sign of ``mu_minus`` so that the sign
conditions ``mu_plus(x,0,0) >= 0`` and ``mu_minus(x,0,0) <= 0`` are the ones
that keep the phases separated.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Literal, Mapping, Sequence

import numpy as np
import sympy as sp
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigurationError, NumericalError
from .noise import NoiseBasis
from .spectral import BoundarySpec, discrete_sobolev_norm

__all__ = [
    "Coefficient",
    "CoefficientSet",
    "Verdict",
    "AssumptionReport",
    "GrowthEnvelope",
    "make_coefficient",
    "BUILTINS",
    "nemytskii_eval",
    "nemytskii_derivative",
    "nemytskii_second_derivative",
    "psi_eval",
    "psi_derivative",
    "psi_hs_norm",
    "psi_hs_constant",
    "validate_inward_pointing",
    "validate_growth",
    "validate_kernel",
]

X, Y, Z = sp.symbols("x y z", real=True)
A, B = sp.symbols("a b", real=True)

ROLE_VARIABLES = {"drift": (X, Y, Z), "noise": (X, Y), "interface": (A, B)}

# name -> (default parameters, expression builder)
_Builder = Callable[[Mapping[str, float]], sp.Expr]
BUILTINS: dict[str, dict[str, tuple[dict[str, float], _Builder]]] = {
    "drift": {
        "zero": ({}, lambda p: sp.Integer(0)),
        "constant": ({"value": 0.0}, lambda p: sp.Float(p["value"])),
        "linear": ({"a": 0.0, "b": 0.0, "source": 0.0}, lambda p: p["a"] * Y + p["b"] * Z + p["source"]),
        "logistic": ({"rate": 1.0, "capacity": 1.0}, lambda p: p["rate"] * Y * (1 - Y / p["capacity"])),
        "gaussian_source": (
            {"amplitude": 1.0, "width": 1.0, "decay": 0.0},
            lambda p: p["amplitude"] * sp.exp(-X**2 / (2 * p["width"] ** 2)) - p["decay"] * Y,
        ),
        "exp_source": ({"amplitude": 1.0, "slope": 1.0}, lambda p: p["amplitude"] * sp.exp(-X) + p["slope"] * Y),
        "cubic": ({"a": 1.0}, lambda p: p["a"] * Y**3),
        "bilinear": ({"a": 1.0}, lambda p: p["a"] * Y * Z),
        "position_linear": ({"a": 1.0}, lambda p: p["a"] * X * Y),
    },
    "noise": {
        "zero": ({}, lambda p: sp.Integer(0)),
        "constant": ({"value": 1.0}, lambda p: sp.Float(p["value"])),
        "linear": ({"scale": 1.0}, lambda p: p["scale"] * Y),
        "gaussian_linear": (
            {"scale": 1.0, "width": 1.0},
            lambda p: p["scale"] * Y * sp.exp(-X**2 / (2 * p["width"] ** 2)),
        ),
        "sine": ({"scale": 1.0}, lambda p: p["scale"] * sp.sin(Y)),
        "quadratic": ({"scale": 1.0}, lambda p: p["scale"] * Y**2),
        "gaussian_tanh": (
            {"scale": 1.0, "width": 1.0},
            lambda p: p["scale"] * sp.tanh(Y) * sp.exp(-X**2 / (2 * p["width"] ** 2)),
        ),
    },
    "interface": {
        "zero": ({}, lambda p: sp.Integer(0)),
        "constant": ({"value": 0.0}, lambda p: sp.Float(p["value"])),
        "linear": ({"a": 0.0, "b": 0.0, "value": 0.0}, lambda p: p["a"] * A + p["b"] * B + p["value"]),
        "stefan": ({"k": 1.0}, lambda p: p["k"] * (B - A)),
        "difference": ({"k": 1.0}, lambda p: p["k"] * (A - B)),
    },
}


@dataclass(frozen=True, eq=False)
class Coefficient:
    """Scalar coefficient given by a symbolic expression in ``variables``."""

    name: str
    expr: sp.Expr
    variables: tuple[sp.Symbol, ...]
    params: Mapping[str, float] = field(default_factory=dict)
    _partials: dict = field(default_factory=dict, repr=False)

    @cached_property
    def _function(self):
        return sp.lambdify(self.variables, self.expr, modules="numpy")

    def __call__(self, *args: ArrayLike) -> NDArray[np.float64]:
        arrays = [np.asarray(a, dtype=float) for a in args]
        shape = np.broadcast_shapes(*(a.shape for a in arrays))
        with np.errstate(all="ignore"):
            value = np.asarray(self._function(*arrays), dtype=float)
        if value.shape == shape and not any(value is a for a in arrays):
            return value
        return np.broadcast_to(value, shape).copy()

    def partial(self, *orders: int) -> "Coefficient":
        """Mixed partial derivative; ``orders[i]`` applies to ``variables[i]``."""
        key = tuple(orders) + (0,) * (len(self.variables) - len(orders))
        if not any(key):
            return self
        cached = self._partials.get(key)
        if cached is None:
            expr = self.expr
            for var, order in zip(self.variables, key):
                if order:
                    expr = sp.diff(expr, var, order)
            label = "".join(f"d{v}{o}" for v, o in zip(self.variables, key) if o)
            cached = Coefficient(f"{self.name}:{label}", expr, self.variables, self.params)
            self._partials[key] = cached
        return cached

    def reflected(self, drift_sign: int = 1) -> "Coefficient":
        """``(x, y, z) -> drift_sign * f(-x, y, -z)`` (drift) or ``(x, y) -> f(-x, y)`` (noise)."""
        x = self.variables[0]
        subs = {x: -x}
        if len(self.variables) == 3:
            subs[self.variables[2]] = -self.variables[2]
        expr = drift_sign * self.expr.subs(subs, simultaneous=True)
        return Coefficient(f"{self.name}:reflected", expr, self.variables, self.params)

    @property
    def is_zero(self) -> bool:
        return self.expr == 0

    def describe(self) -> dict:
        return {"name": self.name, "params": dict(self.params), "expression": str(self.expr)}


def make_coefficient(role: str, name: str, params: Mapping[str, float] | None = None) -> Coefficient:
    """Instantiate the built-in ``name`` for ``role``.

    Unknown names or parameters raise :class:`ConfigurationError` listing the
    available choices.
    """
    if role not in BUILTINS:
        raise ConfigurationError(f"unknown coefficient role {role!r}")
    table = BUILTINS[role]
    if name not in table:
        raise ConfigurationError(
            f"unknown {role} coefficient {name!r}; available built-ins: {', '.join(sorted(table))}"
        )
    defaults, builder = table[name]
    params = dict(params or {})
    unknown = sorted(set(params) - set(defaults))
    if unknown:
        raise ConfigurationError(
            f"unknown parameter(s) {', '.join(unknown)} for {role} coefficient {name!r};"
            f" accepted: {', '.join(sorted(defaults)) or 'none'}"
        )
    resolved = {**defaults, **{k: float(v) for k, v in params.items()}}
    if name == "logistic" and resolved["capacity"] == 0:
        raise ConfigurationError("logistic capacity must be nonzero")
    if "width" in resolved and resolved["width"] <= 0:
        raise ConfigurationError(f"{name} width must be positive")
    return Coefficient(name, sp.sympify(builder(resolved)), ROLE_VARIABLES[role], resolved)


DriftConvention = Literal["direct", "negated"]


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """All coefficients of the two-phase problem."""

    mu_plus: Coefficient
    mu_minus: Coefficient
    sigma_plus: Coefficient
    sigma_minus: Coefficient
    rho: Coefficient
    eta_plus: float = 1.0
    eta_minus: float = 1.0
    boundary: BoundarySpec = field(default_factory=BoundarySpec)
    minus_drift: DriftConvention = "direct"

    def __post_init__(self) -> None:
        if not (self.eta_plus > 0 and self.eta_minus > 0):
            raise ConfigurationError("diffusivities eta_plus and eta_minus must be positive")
        if self.minus_drift not in ("direct", "negated"):
            raise ConfigurationError(f"minus_drift must be 'direct' or 'negated', got {self.minus_drift!r}")

    @cached_property
    def drift_2(self) -> Coefficient:
        return self.mu_minus.reflected(1 if self.minus_drift == "direct" else -1)

    @cached_property
    def noise_2(self) -> Coefficient:
        return self.sigma_minus.reflected()

    def drift(self, phase: int) -> Coefficient:
        """Drift of the phase in centered coordinates."""
        return self.mu_plus if phase > 0 else self.drift_2

    def noise(self, phase: int) -> Coefficient:
        return self.sigma_plus if phase > 0 else self.noise_2

    @cached_property
    def noise_slope(self) -> tuple[Coefficient, Coefficient]:
        return (self.sigma_plus.partial(0, 1), self.noise_2.partial(0, 1))

    @property
    def has_noise(self) -> bool:
        return not (self.sigma_plus.is_zero and self.sigma_minus.is_zero)

    def describe(self) -> dict:
        return {
            "mu_plus": self.mu_plus.describe(),
            "mu_minus": self.mu_minus.describe(),
            "sigma_plus": self.sigma_plus.describe(),
            "sigma_minus": self.sigma_minus.describe(),
            "rho": self.rho.describe(),
            "eta_plus": self.eta_plus,
            "eta_minus": self.eta_minus,
            "minus_drift": self.minus_drift,
        }


def _finite(values: NDArray[np.float64], what: str) -> NDArray[np.float64]:
    bad = np.flatnonzero(~np.isfinite(values))
    if bad.size:
        raise NumericalError(f"{what} is not finite at node {int(bad[0])}")
    return values


def nemytskii_eval(coefficient: Coefficient, x: ArrayLike, u: ArrayLike, du: ArrayLike | None = None):
    """Pointwise ``coefficient(x_i, u_i[, du_i])``."""
    args = (x, u) if du is None else (x, u, du)
    return _finite(coefficient(*args), f"coefficient {coefficient.name!r}")


def nemytskii_derivative(sigma: Coefficient, x: ArrayLike, u: ArrayLike, v: ArrayLike) -> NDArray[np.float64]:
    """``DN(u) v = (d_y sigma)(x, u) * v``."""
    return _finite(sigma.partial(0, 1)(x, u) * np.asarray(v, dtype=float), f"derivative of {sigma.name!r}")


def nemytskii_second_derivative(
    sigma: Coefficient, x: ArrayLike, u: ArrayLike, v: ArrayLike, w: ArrayLike
) -> NDArray[np.float64]:
    """``D^2 N(u)[v, w] = (d_y^2 sigma)(x, u) * v * w``."""
    value = sigma.partial(0, 2)(x, u) * np.asarray(v, dtype=float) * np.asarray(w, dtype=float)
    return _finite(value, f"second derivative of {sigma.name!r}")


def psi_eval(
    sigma: Coefficient, basis: NoiseBasis, x: ArrayLike, u: ArrayLike, x_star: float, k: int, phase: int = 1
) -> NDArray[np.float64]:
    """``sigma(x_i, u_i) * T_zeta e_k(x_star + phase * x_i)``; ``k`` is zero-based."""
    x = np.asarray(x, dtype=float)
    column = basis.columns(x_star + phase * x)[:, k]
    return _finite(sigma(x, u) * column, f"noise coefficient {sigma.name!r}")


def psi_derivative(
    sigma: Coefficient,
    basis: NoiseBasis,
    x: ArrayLike,
    u: ArrayLike,
    x_star: float,
    k: int,
    v: ArrayLike,
    shift: float,
    phase: int = 1,
) -> NDArray[np.float64]:
    """Derivative of ``psi_eval`` in ``(u, x_star)`` along ``(v, shift)``.

    ``d_y sigma * v * T_zeta e_k(x_star + phase x) + shift * sigma * T_{zeta'} e_k(x_star + phase x)``.
    """
    x = np.asarray(x, dtype=float)
    points = x_star + phase * x
    column = basis.columns(points)[:, k]
    slope = basis.columns(points, order=1)[:, k]
    value = sigma.partial(0, 1)(x, u) * np.asarray(v, dtype=float) * column + shift * sigma(x, u) * slope
    return _finite(value, f"noise derivative of {sigma.name!r}")


def _psi_matrix(sigma, basis, x, u, x_star, phase, n):
    x = np.asarray(x, dtype=float)
    cols = basis.columns(x_star + phase * x, n=n)
    return sigma(x, u)[:, None] * cols


def psi_hs_norm(
    sigma: Coefficient,
    basis: NoiseBasis,
    x: ArrayLike,
    u: ArrayLike,
    x_star: float,
    sobolev_order: int,
    phase: int = 1,
    n: int | None = None,
    mixing: NDArray[np.float64] | None = None,
) -> float:
    """``sqrt(sum_k ||Psi(u, x_star) e_k||^2_{H^order})`` over the first ``n`` modes.

    ``mixing`` optionally replaces the modes by ``sum_j mixing[j, k] e_j``.
    Node-to-node difference quotients are used (no boundary padding).
    """
    x = np.asarray(x, dtype=float)
    spacing = float(x[1] - x[0])
    mat = _psi_matrix(sigma, basis, x, u, x_star, phase, n)
    if mixing is not None:
        mat = mat @ mixing
    total = sum(discrete_sobolev_norm(mat[:, k], spacing, sobolev_order) ** 2 for k in range(mat.shape[1]))
    return float(np.sqrt(total))


def psi_hs_constant(
    sigma: Coefficient,
    basis: NoiseBasis,
    x: ArrayLike,
    u: ArrayLike,
    x_star: float,
    sobolev_order: int,
    phase: int = 1,
) -> float:
    """Ratio of :func:`psi_hs_norm` to ``||sigma(., u)||_{H^n} * sup_x sum_{i<=n} ||zeta^(i)(x, .)||``.

    The supremum runs over the basis evaluation grid.
    """
    x = np.asarray(x, dtype=float)
    spacing = float(x[1] - x[0])
    hs = psi_hs_norm(sigma, basis, x, u, x_star, sobolev_order, phase)
    field_norm = discrete_sobolev_norm(sigma(x, u), spacing, sobolev_order)
    kernel = basis.kernel
    sup = np.max(sum(np.sqrt(kernel.norm_squared(basis.eval_grid, i)) for i in range(sobolev_order + 1)))
    denom = field_norm * sup
    return float(hs / denom) if denom > 0 else 0.0


# ---------------------------------------------------------------------------
# Assumption audits


@dataclass
class Verdict:
    name: str
    verdict: Literal["pass", "fail", "inconclusive"]
    witnesses: list[dict] = field(default_factory=list)
    constants: dict = field(default_factory=dict)
    note: str = ""

    def __post_init__(self) -> None:
        if self.verdict == "fail" and not self.witnesses:
            raise ValueError("a failing verdict needs at least one witness")


@dataclass
class AssumptionReport:
    entries: list[Verdict] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.verdict != "fail" for e in self.entries)

    def verdict(self, name: str) -> str:
        for e in self.entries:
            if e.name == name:
                return e.verdict
        raise KeyError(name)

    def extend(self, other: "AssumptionReport") -> "AssumptionReport":
        self.entries.extend(other.entries)
        return self

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "entries": [
                {"name": e.name, "verdict": e.verdict, "witnesses": e.witnesses, "constants": e.constants, "note": e.note}
                for e in self.entries
            ],
        }


def _sign_check(name, values, points, ok, describe, max_witnesses=5) -> Verdict:
    bad = np.flatnonzero(~ok(values))
    if bad.size:
        witnesses = [describe(points[i], values[i]) for i in bad[:max_witnesses]]
        return Verdict(name, "fail", witnesses, {"violations": int(bad.size), "samples": int(values.size)})
    return Verdict(name, "pass", constants={"samples": int(values.size)})


def validate_inward_pointing(coeffs: CoefficientSet, x_samples: ArrayLike) -> AssumptionReport:
    """Sign conditions on the cone boundary at the sampled positions.

    Checks ``mu_plus(x,0,0) >= 0``, ``mu_minus(x,0,0) <= 0`` and
    ``sigma_plus(x,0) = sigma_minus(x,0) = 0``.  The left-phase conditions are
    checked at ``x`` and ``-x`` because the reflected phase evaluates them at
    negative positions.  Dirichlet problems also need ``sigma(0,0) = 0``.
    """
    xs = np.atleast_1d(np.asarray(x_samples, dtype=float))
    if xs.size == 0:
        raise ConfigurationError("inward-pointing audit needs at least one sample position")
    both = np.concatenate([xs, -xs])
    zero = np.zeros_like(xs)
    zero2 = np.zeros_like(both)
    point = lambda x, v: {"x": float(x), "y": 0.0, "value": float(v)}
    report = AssumptionReport(
        [
            _sign_check("mu_plus_inward", coeffs.mu_plus(xs, zero, zero), xs, lambda v: v >= 0, point),
            _sign_check("mu_minus_inward", coeffs.mu_minus(both, zero2, zero2), both, lambda v: v <= 0, point),
            _sign_check("sigma_plus_parallel", coeffs.sigma_plus(xs, zero), xs, lambda v: v == 0, point),
            _sign_check("sigma_minus_parallel", coeffs.sigma_minus(both, zero2), both, lambda v: v == 0, point),
        ]
    )
    if coeffs.boundary.kind == "dirichlet":
        origin = np.zeros(1)
        values = np.array([coeffs.sigma_plus(0.0, 0.0), coeffs.sigma_minus(0.0, 0.0)], dtype=float)
        report.entries.append(
            _sign_check("sigma_vanishes_at_origin", values, np.concatenate([origin, origin]), lambda v: v == 0, point)
        )
    return report


@dataclass
class GrowthEnvelope:
    """Claimed growth envelopes for one coefficient.

    ``a(x)`` is the square-integrable part, ``b`` the locally bounded factor
    (a function of ``(y, z)`` for drifts, of ``y`` for noise coefficients),
    ``b_tilde`` bounds the ``(y, z)``-partials of a drift.  Missing entries are
    fitted from the samples.
    """

    a: Callable[[NDArray], NDArray] | None = None
    b: Callable[..., NDArray] | None = None
    b_tilde: Callable[..., NDArray] | None = None


def _default_a(x):
    return 1.0 / (1.0 + np.asarray(x, dtype=float) ** 2)


def _lattice(box: Mapping[str, Sequence[float]], names: Sequence[str]) -> list[NDArray[np.float64]]:
    axes = []
    for name in names:
        lo, hi, count = box[name]
        axes.append(np.linspace(float(lo), float(hi), int(count)))
    return np.meshgrid(*axes, indexing="ij")


def _envelope_check(name, lhs, bound_factor, b_values, grids, labels, claimed: bool) -> Verdict:
    """Check ``lhs <= b * bound_factor`` where ``b`` is claimed or fitted.

    A fitted ``b`` takes the supremum over the ``x`` axis (axis 0).  It fails
    when the fit on the full ``x`` range exceeds the fit on the inner half by
    more than a factor of two, which signals growth faster than the envelope.
    """
    ratio = np.divide(lhs, bound_factor, out=np.zeros_like(lhs), where=bound_factor > 0)
    ratio = np.where((bound_factor == 0) & (lhs > 0), np.inf, ratio)
    x = grids[0]
    if claimed:
        margin = b_values * bound_factor - lhs
        bad = np.argwhere(margin < -1e-12 * np.maximum(1.0, np.abs(lhs)))
        constants = {"worst_margin": float(np.min(margin))}
        if bad.size:
            witnesses = [
                {**{lab: float(g[tuple(i)]) for lab, g in zip(labels, grids)}, "margin": float(margin[tuple(i)])}
                for i in bad[np.argsort(margin[tuple(bad.T)])][:5]
            ]
            return Verdict(name, "fail", witnesses, constants)
        return Verdict(name, "pass", constants=constants)
    fitted = np.max(ratio, axis=0)
    inner = np.abs(x[:, ...]) <= 0.5 * np.max(np.abs(x))
    fitted_inner = np.max(np.where(inner, ratio, 0.0), axis=0)
    growth = np.divide(fitted, fitted_inner, out=np.ones_like(fitted), where=fitted_inner > 0)
    growth = np.where((fitted_inner == 0) & (fitted > 0), np.inf, growth)
    constants = {"fitted_b_max": float(np.max(fitted)), "x_range_growth": float(np.max(growth))}
    if not np.all(np.isfinite(fitted)) or np.max(growth) > 2.0:
        idx = np.unravel_index(np.argmax(np.where(np.isfinite(ratio), ratio, np.inf)), ratio.shape)
        witness = {**{lab: float(g[idx]) for lab, g in zip(labels, grids)}, "ratio": float(ratio[idx])}
        return Verdict(name, "fail", [witness], constants, note="fitted envelope keeps growing with |x|")
    return Verdict(name, "pass", constants=constants)


def validate_growth(
    coeffs: CoefficientSet,
    mode: Literal["dirichlet", "first_order"],
    sample_box: Mapping[str, Sequence[float]],
    envelopes: Mapping[str, GrowthEnvelope] | None = None,
) -> AssumptionReport:
    """Sample the growth inequalities on a lattice.

    ``sample_box`` maps ``"x"``, ``"y"``, ``"z"`` to ``(lo, hi, count)``.
    ``envelopes`` maps ``"mu_plus"``, ``"mu_minus"``, ``"sigma_plus"``,
    ``"sigma_minus"`` to claimed envelopes; absent ones are fitted.  A pass
    only means no violation was found on the lattice.
    """
    if mode not in ("dirichlet", "first_order"):
        raise ConfigurationError(f"growth audit mode must be 'dirichlet' or 'first_order', got {mode!r}")
    envelopes = envelopes or {}
    report = AssumptionReport()
    xg, yg, zg = _lattice(sample_box, "xyz")
    for role in ("mu_plus", "mu_minus"):
        mu: Coefficient = getattr(coeffs, role)
        env = envelopes.get(role, GrowthEnvelope())
        a = (env.a or _default_a)(xg)
        if mode == "dirichlet":
            factor = a + np.abs(yg) + np.abs(zg)
            b = env.b(yg, zg) if env.b else None
            for label, fn in (("value", mu), ("dx", mu.partial(1, 0, 0))):
                report.entries.append(
                    _envelope_check(f"{role}_growth_{label}", np.abs(fn(xg, yg, zg)), factor, b,
                                    (xg, yg, zg), "xyz", env.b is not None)
                )
            bt = env.b_tilde(yg, zg) if env.b_tilde else None
            for label, fn in (("dy", mu.partial(0, 1, 0)), ("dz", mu.partial(0, 0, 1))):
                report.entries.append(
                    _envelope_check(f"{role}_bound_{label}", np.abs(fn(xg, yg, zg)), np.ones_like(xg), bt,
                                    (xg, yg, zg), "xyz", env.b_tilde is not None)
                )
        else:
            factor = a + np.abs(yg) + np.abs(zg)
            b = env.b(yg) if env.b else None
            report.entries.append(
                _envelope_check(f"{role}_growth_value", np.abs(mu(xg, yg, zg)), factor, b, (xg, yg, zg), "xyz",
                                env.b is not None)
            )
        report.entries.append(
            Verdict(f"{role}_lipschitz_uniform_in_x", "inconclusive",
                    constants={"sampled_lipschitz": _sampled_lipschitz(mu, xg, yg, zg)},
                    note="uniformity in x cannot be certified beyond the sample box")
        )
    xs2, ys2 = _lattice(sample_box, "xy")
    max_order = 4 if mode == "dirichlet" else 3
    for role in ("sigma_plus", "sigma_minus"):
        sigma: Coefficient = getattr(coeffs, role)
        env = envelopes.get(role, GrowthEnvelope())
        for i, j in itertools.product(range(max_order + 1), repeat=2):
            if i + j > max_order:
                continue
            lhs = np.abs(sigma.partial(i, j)(xs2, ys2))
            if j == 0:
                factor = (env.a or _default_a)(xs2) + np.abs(ys2)
            else:
                factor = np.ones_like(xs2)
            b = env.b(ys2) if env.b else None
            report.entries.append(
                _envelope_check(f"{role}_growth_d{i}{j}", lhs, factor, b, (xs2, ys2), "xy", env.b is not None)
            )
    if mode == "dirichlet":
        values = np.array([coeffs.sigma_plus(0.0, 0.0), coeffs.sigma_minus(0.0, 0.0)], dtype=float)
        report.entries.append(
            _sign_check("sigma_vanishes_at_origin", values, np.zeros(2), lambda v: v == 0,
                        lambda x, v: {"x": 0.0, "y": 0.0, "value": float(v)})
        )
        report.entries.append(
            Verdict("drift_equicontinuity", "inconclusive",
                    note="equicontinuity in x is not mechanically checkable on a finite lattice")
        )
    return report


def _sampled_lipschitz(mu: Coefficient, xg, yg, zg) -> float:
    dy = np.abs(mu.partial(0, 1, 0)(xg, yg, zg))
    dz = np.abs(mu.partial(0, 0, 1)(xg, yg, zg))
    return float(np.max(np.hypot(dy, dz)))


def validate_kernel(basis: NoiseBasis, max_order: int = 4) -> AssumptionReport:
    """Estimate ``sup_x ||zeta^(i)(x, .)||`` over the basis evaluation grid."""
    kernel = basis.kernel
    constants, entries = {}, []
    for order in range(max_order + 1):
        if order > kernel.max_order:
            entries.append(Verdict(f"kernel_derivative_{order}", "inconclusive",
                                   note=f"kernel provides derivatives up to order {kernel.max_order}"))
            continue
        norms = np.sqrt(kernel.norm_squared(basis.eval_grid, order))
        constants[order] = float(np.max(norms))
        if not np.all(np.isfinite(norms)):
            idx = int(np.flatnonzero(~np.isfinite(norms))[0])
            entries.append(Verdict(f"kernel_derivative_{order}", "fail", [{"x": float(basis.eval_grid[idx])}]))
        else:
            entries.append(Verdict(f"kernel_derivative_{order}", "pass", constants={"sup_norm": constants[order]}))
    return AssumptionReport(entries)
