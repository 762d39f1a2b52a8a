"""Exponential-Euler time stepping for the Ito and Wong-Zakai equations.

Both schemes treat the linear part exactly through the semigroup:

    Ito:          X <- S_dt [X + dt B(X) + sum_k sigma_k(X) d beta_k]
    Wong-Zakai:   X <- S_dt [X + dt (B(X) - Sigma_inf(X) + sum_k sigma_k(X) beta'_k)]

where ``d beta_k`` are increments of the fine Brownian path and ``beta'_k``
is the slope of the piecewise-linear interpolant on the current interval.
Steps never straddle an interpolation node.

The steppers only need an object with ``propagate``, ``drift``,
``noise_combination``, ``correction_limit`` and ``exit_norm``; the scalar
geometric Brownian system used by the ODE reduction check satisfies the
same protocol.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Literal, Protocol, Sequence

import numpy as np
from numpy.typing import NDArray

from .dynamics import TruncationProfile
from .errors import ConfigurationError
from .noise import BrownianDriver, Interpolant

__all__ = [
    "EvolutionSystem",
    "SolverConfig",
    "Trajectory",
    "ExitTimeReport",
    "step_ito",
    "step_wz",
    "run_trajectory",
    "exit_time",
    "exit_reports",
    "EXPLOSION_THRESHOLD",
]

EXPLOSION_THRESHOLD = 1e6


class EvolutionSystem(Protocol):
    n_modes: int

    def propagate(self, dt: float, v: NDArray[np.float64]) -> NDArray[np.float64]: ...
    def drift(self, v: NDArray[np.float64]) -> NDArray[np.float64]: ...
    def noise_combination(self, v: NDArray[np.float64], weights: NDArray[np.float64]) -> NDArray[np.float64]: ...
    def correction_limit(self, v: NDArray[np.float64]) -> NDArray[np.float64]: ...
    def exit_norm(self, v: NDArray[np.float64]) -> float: ...


@dataclass(frozen=True)
class SolverConfig:
    horizon: float
    dt: float
    mode: Literal["ito", "wong_zakai"] = "ito"
    n_modes: int | None = None
    m: int | None = None
    truncation_radius: float | None = None
    alpha: float = 0.0
    exit_radii: tuple[float, ...] = ()
    stride: int = 0
    corrected: bool = True

    def __post_init__(self) -> None:
        if not self.horizon > 0:
            raise ConfigurationError(f"horizon T must be positive, got {self.horizon!r}")
        if not self.dt > 0:
            raise ConfigurationError(f"time step must be positive, got {self.dt!r}")
        if self.mode not in ("ito", "wong_zakai"):
            raise ConfigurationError(f"solver mode must be 'ito' or 'wong_zakai', got {self.mode!r}")
        steps = self.n_steps
        if self.mode == "wong_zakai":
            if self.m is None or int(self.m) != self.m or self.m < 1:
                raise ConfigurationError("Wong-Zakai mode needs a positive integer interpolation level m")
            if steps % self.m:
                raise ConfigurationError(
                    f"time step dt={self.dt!r} does not divide the interpolation interval"
                    f" T/m={self.horizon / self.m!r}"
                )
        if not 0 <= self.alpha < 1:
            raise ConfigurationError(f"truncation exponent alpha must lie in [0, 1), got {self.alpha!r}")
        if self.truncation_radius is not None and not self.truncation_radius > 0:
            raise ConfigurationError(f"truncation radius must be positive, got {self.truncation_radius!r}")
        if any(not r > 0 for r in self.exit_radii):
            raise ConfigurationError(f"exit radii must be positive, got {list(self.exit_radii)!r}")

    @property
    def n_steps(self) -> int:
        steps = int(round(self.horizon / self.dt))
        if steps < 1 or abs(steps * self.dt - self.horizon) > 1e-9 * self.horizon:
            raise ConfigurationError(f"time step dt={self.dt!r} does not divide the horizon T={self.horizon!r}")
        return steps


@dataclass(frozen=True)
class ExitTimeReport:
    radius: float
    closed_exit: float
    open_exit: float

    def to_dict(self) -> dict:
        return {"radius": self.radius, "closed_exit": self.closed_exit, "open_exit": self.open_exit}


@dataclass
class Trajectory:
    """Recorded run.

    ``norms`` has one entry per time in ``times`` (every step); states are
    kept at ``snapshot_times`` only.
    """

    times: NDArray[np.float64]
    norms: NDArray[np.float64]
    snapshot_times: NDArray[np.float64]
    snapshots: NDArray[np.float64]
    status: Literal["completed", "exploded"]
    horizon: float
    exits: list[ExitTimeReport] = field(default_factory=list)
    monitor: NDArray[np.float64] | None = None

    @property
    def final_state(self) -> NDArray[np.float64]:
        return self.snapshots[-1]

    def summary(self) -> dict:
        return {
            "status": self.status,
            "final_time": float(self.times[-1]),
            "max_norm": float(np.max(self.norms)),
            "exits": [e.to_dict() for e in self.exits],
        }


def exit_time(
    norms: Sequence[float], r: float, ball: Literal["open", "closed"], times: Sequence[float] | None = None,
    horizon: float | None = None,
) -> float:
    """First recorded time with ``norm > r`` (closed ball) or ``norm >= r`` (open ball).

    Non-finite norms count as exits.  If the path never leaves, the result is
    ``horizon`` (default: the last time).
    """
    values = np.asarray(norms, dtype=float)
    grid = np.arange(values.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    end = float(grid[-1]) if horizon is None else float(horizon)
    if ball == "closed":
        hit = (values > r) | ~np.isfinite(values)
    elif ball == "open":
        hit = (values >= r) | ~np.isfinite(values)
    else:
        raise ConfigurationError(f"ball must be 'open' or 'closed', got {ball!r}")
    idx = np.flatnonzero(hit)
    return float(grid[idx[0]]) if idx.size else end


def exit_reports(norms, times, radii, horizon) -> list[ExitTimeReport]:
    return [
        ExitTimeReport(float(r), exit_time(norms, r, "closed", times, horizon), exit_time(norms, r, "open", times, horizon))
        for r in radii
    ]


def step_ito(
    system: EvolutionSystem, v: NDArray[np.float64], dt: float, increments: NDArray[np.float64], factor: float = 1.0
) -> NDArray[np.float64]:
    """One exponential Euler-Maruyama step; ``factor`` scales drift and noise."""
    update = v + (dt * factor) * system.drift(v)
    if len(increments):
        update = update + factor * system.noise_combination(v, increments)
    return system.propagate(dt, update)


def step_wz(
    system: EvolutionSystem,
    v: NDArray[np.float64],
    dt: float,
    slopes: NDArray[np.float64],
    factor: float = 1.0,
    correction: NDArray[np.float64] | None = None,
    corrected: bool = True,
) -> NDArray[np.float64]:
    """One exponential Euler step of the random PDE with frozen slopes.

    ``correction`` overrides ``Sigma_inf(v)`` (used for truncated runs).
    """
    rate = factor * system.drift(v)
    if len(slopes):
        rate = rate + factor * system.noise_combination(v, slopes)
    if corrected:
        rate = rate - (system.correction_limit(v) if correction is None else correction)
    return system.propagate(dt, v + dt * rate)


def run_trajectory(
    config: SolverConfig,
    system,
    initial: NDArray[np.float64],
    driver: BrownianDriver | None = None,
    monitor: Callable[[NDArray[np.float64]], float] | None = None,
) -> Trajectory:
    """Integrate from ``initial`` to the horizon or until explosion.

    ``config.stride = 0`` stores only the initial and final states; a positive
    stride stores every ``stride``-th state.  ``monitor``, if given, is
    evaluated on the state after every step (and on ``initial``).
    """
    n_steps = config.n_steps
    dt = config.dt
    n_modes = system.n_modes if config.n_modes is None else config.n_modes
    if n_modes > system.n_modes:
        raise ConfigurationError(f"requested {n_modes} noise modes but the system has {system.n_modes}")
    noisy = n_modes > 0 and driver is not None
    if noisy:
        if abs(driver.horizon - config.horizon) > 1e-12 * config.horizon:
            raise ConfigurationError("driver horizon differs from the solver horizon")
        if driver.n_fine % n_steps:
            raise ConfigurationError(
                f"time step dt={dt!r} is not a multiple of the driver's fine step {driver.fine_step!r}"
            )
        fine_per_step = driver.n_fine // n_steps
        interp: Interpolant | None = driver.interpolate(config.m) if config.mode == "wong_zakai" else None
    profile = TruncationProfile(config.truncation_radius) if config.truncation_radius else None

    v = np.array(initial, dtype=float)
    norms = np.empty(n_steps + 1)
    norms[0] = system.exit_norm(v)
    watched = np.full(n_steps + 1, np.nan) if monitor is not None else None
    if watched is not None:
        watched[0] = monitor(v)
    snap_idx = [0]
    snaps = [v.copy()]
    status = "completed"
    last = n_steps
    empty = np.zeros(0)
    for j in range(n_steps):
        factor = 1.0
        correction = None
        if profile is not None:
            s = system.alpha_norm_squared(v, config.alpha)
            factor = float(profile.value(s))
            if config.mode == "wong_zakai" and config.corrected:
                correction = system.truncated_correction(v, profile, config.alpha, n_modes)
        if config.mode == "ito":
            inc = driver.increment(j * fine_per_step, (j + 1) * fine_per_step)[:n_modes] if noisy else empty
            v = step_ito(system, v, dt, inc, factor)
        else:
            slopes = interp.slope_for_fine_index(j * fine_per_step)[:n_modes] if noisy else empty
            v = step_wz(system, v, dt, slopes, factor, correction, config.corrected)
        norm = system.exit_norm(v) if np.all(np.isfinite(v)) else math.inf
        norms[j + 1] = norm
        if watched is not None and math.isfinite(norm):
            watched[j + 1] = monitor(v)
        if not math.isfinite(norm) or norm > EXPLOSION_THRESHOLD:
            status = "exploded"
            last = j + 1
            break
        if config.stride and (j + 1) % config.stride == 0 and j + 1 < n_steps:
            snap_idx.append(j + 1)
            snaps.append(v.copy())
    snap_idx.append(last)
    snaps.append(v.copy())
    times = dt * np.arange(last + 1)
    norms = norms[: last + 1]
    trajectory = Trajectory(
        times=times,
        norms=norms,
        snapshot_times=dt * np.asarray(snap_idx, dtype=float),
        snapshots=np.asarray(snaps),
        status=status,
        horizon=config.horizon,
        monitor=None if watched is None else watched[: last + 1],
    )
    trajectory.exits = exit_reports(norms, times, config.exit_radii, config.horizon)
    return trajectory
