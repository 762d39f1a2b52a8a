"""Run configuration: parsing, defaults and cross-field validation.

A configuration is a TOML document with the sections ``grid``, ``operator``,
``coefficients``, ``kernel``, ``noise``, ``initial``, ``solver`` and
``experiment``.  :func:`resolve_config` fills in every default so that the
resolved dictionary (stored in each run manifest) fully determines a run.
A manifest file can be passed wherever a configuration is expected; its
``config`` entry is used.
"""

from __future__ import annotations

import copy
import json
import math
import sys
from pathlib import Path
from typing import Any, Mapping

from .coefficients import BUILTINS
from .errors import ConfigurationError
from .experiments import INITIAL_CONDITIONS, ProblemSpec
from .solvers import SolverConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

__all__ = ["EXPERIMENTS", "load_config", "parse_config", "resolve_config", "problem_spec", "solver_config"]

_SECTIONS: dict[str, dict[str, Any]] = {
    "grid": {"length": 8.0, "n_points": 128},
    "operator": {
        "boundary": "robin",
        "kappa_plus": 1.0,
        "kappa_minus": 1.0,
        "eta_plus": 1.0,
        "eta_minus": 1.0,
        "shift": 1.0,
    },
    "noise": {"n_modes": 32, "eval_margin": 4.0, "eval_resolution": 0.02},
    "solver": {
        "horizon": 0.5,
        "dt": 0.5 / 2048,
        "mode": "ito",
        "n_modes": None,
        "m": None,
        "truncation_radius": None,
        "alpha": 0.0,
        "exit_radii": [],
        "stride": 0,
        "sobolev_order": None,
    },
}

_COEFFICIENT_SLOTS = {
    "mu_plus": "drift",
    "mu_minus": "drift",
    "sigma_plus": "noise",
    "sigma_minus": "noise",
    "rho": "interface",
}

_KERNEL_DEFAULTS: dict[str, dict[str, Any]] = {
    "gaussian_convolution": {"width": 1.2, "y_support": 15.0, "amplitude": 1.0, "normalized": True},
    "separable": {"y_support": 15.0, "amplitude": 1.0, "shape": "constant", "width": 1.0},
    "tabulated": {"path": None},
}

EXPERIMENTS: dict[str, dict[str, Any]] = {
    "simulate": {"sample": 0, "lab_points": 0},
    "wz_convergence": {
        "m_list": [8, 32, 128],
        "n_list": [2, 32],
        "samples": 50,
        "p": 1.0,
        "radius": 10.0,
        "epsilon": 1.0,
    },
    "phase_separation": {
        "samples": 100,
        "m": 32,
        "schemes": ["ito", "wong_zakai"],
        "require_inward_pointing": True,
    },
    "ode_reduction": {
        "sigma": 0.5,
        "horizon": 1.0,
        "m_list": [16, 32, 64, 128, 256],
        "samples": 500,
        "ito_levels": [64, 128, 256, 512],
        "fine_steps": 8192,
        "x0": 1.0,
    },
    "validate_assumptions": {"mode": None, "y_range": 2.0, "lattice": 9, "kernel_order": 4},
    "exit_time_consistency": {
        "families": 20,
        "m_list": [8, 32, 128, 512],
        "radius_fraction": 0.5,
        "synthetic": True,
    },
}


def load_config(path: str | Path) -> dict:
    """Read a TOML configuration or the ``config`` entry of a JSON manifest."""
    path = Path(path)
    try:
        text = path.read_bytes()
    except OSError as exc:
        raise ConfigurationError(f"cannot read configuration {str(path)!r}: {exc.strerror}") from exc
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"{path}: invalid JSON ({exc})") from exc
        if not isinstance(data, dict) or "config" not in data:
            raise ConfigurationError(f"{path}: a JSON file must be a run manifest with a 'config' entry")
        return data["config"]
    try:
        return tomllib.loads(text.decode("utf-8"))
    except (tomllib.TOMLDecodeError, UnicodeDecodeError) as exc:
        raise ConfigurationError(f"{path}: invalid TOML ({exc})") from exc


def parse_config(path: str | Path) -> dict:
    return resolve_config(load_config(path))


def _merge(section: str, given: Mapping[str, Any] | None, defaults: Mapping[str, Any]) -> dict:
    given = dict(given or {})
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) {', '.join(repr(k) for k in unknown)} in section [{section}];"
            f" accepted: {', '.join(sorted(defaults))}"
        )
    return {**copy.deepcopy(dict(defaults)), **given}


def _named_entry(section: str, entry: Any, table: Mapping[str, Mapping[str, Any]], what: str) -> dict:
    if isinstance(entry, str):
        entry = {"name": entry}
    if not isinstance(entry, Mapping) or "name" not in entry:
        raise ConfigurationError(f"[{section}] needs a 'name' selecting a {what}")
    params = dict(entry)
    name = params.pop("name")
    if name not in table:
        raise ConfigurationError(f"unknown {what} {name!r} in [{section}]; available: {', '.join(sorted(table))}")
    return {"name": name, **_merge(section, params, table[name])}


def _positive(section: str, key: str, value: Any) -> None:
    if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0 or not math.isfinite(value):
        raise ConfigurationError(f"[{section}] {key} must be a positive number, got {value!r}")


def resolve_config(raw: Mapping[str, Any]) -> dict:
    """Materialize every default and check all cross-field constraints."""
    known = {*_SECTIONS, "coefficients", "kernel", "initial", "experiment"}
    unknown = sorted(set(raw) - known)
    if unknown:
        raise ConfigurationError(f"unknown section(s) {', '.join(unknown)}; accepted: {', '.join(sorted(known))}")
    config: dict[str, Any] = {name: _merge(name, raw.get(name), defaults) for name, defaults in _SECTIONS.items()}

    coefficients = dict(raw.get("coefficients") or {})
    resolved_coefficients: dict[str, Any] = {"minus_drift": coefficients.pop("minus_drift", "direct")}
    unknown = sorted(set(coefficients) - set(_COEFFICIENT_SLOTS))
    if unknown:
        raise ConfigurationError(
            f"unknown key(s) {', '.join(repr(k) for k in unknown)} in section [coefficients];"
            f" accepted: minus_drift, {', '.join(_COEFFICIENT_SLOTS)}"
        )
    for slot, role in _COEFFICIENT_SLOTS.items():
        table = {name: defaults for name, (defaults, _) in BUILTINS[role].items()}
        resolved_coefficients[slot] = _named_entry(
            f"coefficients.{slot}", coefficients.get(slot, "zero"), table, f"{role} coefficient"
        )
    if resolved_coefficients["minus_drift"] not in ("direct", "negated"):
        raise ConfigurationError("[coefficients] minus_drift must be 'direct' or 'negated'")
    config["coefficients"] = resolved_coefficients

    kernel = raw.get("kernel", {"name": "gaussian_convolution"})
    config["kernel"] = _named_entry("kernel", kernel, _KERNEL_DEFAULTS, "kernel")
    if config["kernel"]["name"] == "tabulated" and not config["kernel"]["path"]:
        raise ConfigurationError("[kernel] tabulated kernels need a 'path' to a CSV file")
    initial_table = {name: defaults for name, (defaults, _) in INITIAL_CONDITIONS.items()}
    config["initial"] = _named_entry("initial", raw.get("initial", "bump"), initial_table, "initial condition")

    experiment = dict(raw.get("experiment") or {})
    name = experiment.pop("name", "simulate")
    if name not in EXPERIMENTS:
        raise ConfigurationError(f"unknown experiment {name!r}; available: {', '.join(EXPERIMENTS)}")
    seed = experiment.pop("seed", 0)
    config["experiment"] = {"name": name, "seed": seed, **_merge("experiment", experiment, EXPERIMENTS[name])}
    _check(config)
    return config


def _check(config: dict) -> None:
    grid, op, noise, solver, exp = (config[k] for k in ("grid", "operator", "noise", "solver", "experiment"))
    _positive("grid", "length", grid["length"])
    if not isinstance(grid["n_points"], int) or grid["n_points"] < 3:
        raise ConfigurationError(f"[grid] n_points must be an integer >= 3, got {grid['n_points']!r}")
    if op["boundary"] not in ("dirichlet", "robin"):
        raise ConfigurationError(f"[operator] boundary must be 'dirichlet' or 'robin', got {op['boundary']!r}")
    for key in ("eta_plus", "eta_minus", "shift"):
        _positive("operator", key, op[key])
    if op["boundary"] == "robin":
        for key in ("kappa_plus", "kappa_minus"):
            _positive("operator", key, op[key])
    if not isinstance(noise["n_modes"], int) or noise["n_modes"] < 1:
        raise ConfigurationError(f"[noise] n_modes must be a positive integer, got {noise['n_modes']!r}")
    _positive("noise", "eval_resolution", noise["eval_resolution"])
    if not noise["eval_margin"] >= 0:
        raise ConfigurationError("[noise] eval_margin must be nonnegative")
    if not isinstance(exp["seed"], int) or exp["seed"] < 0:
        raise ConfigurationError(f"[experiment] seed must be a nonnegative integer, got {exp['seed']!r}")

    _positive("solver", "horizon", solver["horizon"])
    _positive("solver", "dt", solver["dt"])
    if solver["sobolev_order"] is None:
        solver["sobolev_order"] = 2 if op["boundary"] == "dirichlet" else 1
    if solver["sobolev_order"] not in (1, 2):
        raise ConfigurationError(f"[solver] sobolev_order must be 1 or 2, got {solver['sobolev_order']!r}")
    if solver["n_modes"] is not None and not 1 <= solver["n_modes"] <= noise["n_modes"]:
        raise ConfigurationError(
            f"[solver] n_modes={solver['n_modes']!r} must lie in 1..{noise['n_modes']} (the [noise] n_modes)"
        )
    solver_config(config)  # horizon/step/m/alpha/radii constraints

    ms = []
    if exp["name"] in ("wz_convergence", "exit_time_consistency"):
        ms = exp["m_list"]
    elif exp["name"] == "phase_separation":
        ms = [exp["m"]] if "wong_zakai" in exp["schemes"] else []
        unknown = sorted(set(exp["schemes"]) - {"ito", "wong_zakai"})
        if unknown or not exp["schemes"]:
            raise ConfigurationError("[experiment] schemes must be a nonempty subset of ito, wong_zakai")
    for m in ms:
        SolverConfig(solver["horizon"], solver["dt"], "wong_zakai", m=m)
    if exp["name"] == "wz_convergence":
        for key in ("m_list", "n_list"):
            values = exp[key]
            if sorted(set(values)) != list(values) or not values:
                raise ConfigurationError(f"[experiment] {key} must be strictly increasing, got {values!r}")
        if max(exp["n_list"]) > noise["n_modes"]:
            raise ConfigurationError(
                f"[experiment] n_list entries must not exceed [noise] n_modes = {noise['n_modes']}"
            )
        if exp["samples"] < 30:
            raise ConfigurationError(f"[experiment] samples must be at least 30, got {exp['samples']!r}")
        for key in ("radius", "epsilon"):
            _positive("experiment", key, exp[key])
        if not exp["p"] >= 1:
            raise ConfigurationError(f"[experiment] p must be >= 1, got {exp['p']!r}")
    if exp["name"] == "ode_reduction":
        _positive("experiment", "horizon", exp["horizon"])
        for value in [*exp["m_list"], *exp["ito_levels"]]:
            if exp["fine_steps"] % value:
                raise ConfigurationError(
                    f"[experiment] m and Ito level {value} must divide fine_steps = {exp['fine_steps']}"
                )
    if exp["name"] in ("phase_separation", "wz_convergence", "exit_time_consistency"):
        key = "families" if exp["name"] == "exit_time_consistency" else "samples"
        if not isinstance(exp[key], int) or exp[key] < 0:
            raise ConfigurationError(f"[experiment] {key} must be a nonnegative integer")


def problem_spec(config: Mapping[str, Any]) -> ProblemSpec:
    operator = {**config["operator"], "sobolev_order": config["solver"]["sobolev_order"]}
    return ProblemSpec(
        grid=dict(config["grid"]),
        operator=operator,
        coefficients=copy.deepcopy(dict(config["coefficients"])),
        kernel=dict(config["kernel"]),
        noise=dict(config["noise"]),
        initial=dict(config["initial"]),
    )


def solver_config(config: Mapping[str, Any]) -> SolverConfig:
    s = config["solver"]
    return SolverConfig(
        horizon=float(s["horizon"]),
        dt=float(s["dt"]),
        mode=s["mode"],
        n_modes=s["n_modes"],
        m=s["m"],
        truncation_radius=s["truncation_radius"],
        alpha=float(s["alpha"]),
        exit_radii=tuple(float(r) for r in s["exit_radii"]),
        stride=int(s["stride"]),
    )
