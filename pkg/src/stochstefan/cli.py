"""Command line entry point: ``stochstefan --config run.toml [--seed N] [--out DIR] [--threads N] [--dry-run]``.

Exit status is 0 when the experiment passes, 1 when it runs but fails and 2
for configuration errors.  Every run writes ``manifest.json`` (resolved
configuration, version, timings, output checksums) next to its outputs;
passing that manifest back as ``--config`` reproduces the outputs byte for
byte.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import os
import platform
import sys
import time
import warnings
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import __version__
from .coefficients import AssumptionReport
from .config import parse_config, problem_spec, resolve_config, solver_config
from .errors import ConfigurationError, StochStefanError
from .experiments import (
    exit_time_consistency,
    ode_reduction_check,
    phase_separation_experiment,
    reconstruct_physical,
    simulate,
    validate_assumptions,
    wz_convergence_study,
)

__all__ = ["main", "dispatch", "OUTPUT_ROOT_ENV"]

OUTPUT_ROOT_ENV = "STOCHSTEFAN_OUTPUT_ROOT"
log = logging.getLogger("stochstefan")


def _plain(value: Any) -> Any:
    """Convert numpy scalars/arrays and tuples to JSON-ready Python objects."""
    if isinstance(value, Mapping):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_plain(v) for v in value]
    if isinstance(value, np.ndarray):
        return _plain(value.tolist())
    if isinstance(value, np.generic):
        return _plain(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return repr(value)
    return value


def _json_text(payload: Any) -> str:
    return json.dumps(_plain(payload), indent=2, sort_keys=True) + "\n"


def _csv_text(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buffer.getvalue()


class _Outputs:
    """Collects output files so checksums can go into the manifest."""

    def __init__(self, directory: Path):
        self.directory = directory
        self.files: dict[str, str] = {}

    def write(self, name: str, text: str) -> None:
        data = text.encode("utf-8")
        (self.directory / name).write_bytes(data)
        self.files[name] = hashlib.sha256(data).hexdigest()


# ---------------------------------------------------------------------------
# Experiment runners: each returns (passed, report payload) and writes CSVs


def _run_simulate(config, out: _Outputs, threads: int) -> tuple[bool, dict]:
    spec = problem_spec(config)
    solver = solver_config(config)
    exp = config["experiment"]
    trajectory = simulate(spec, solver, seed=exp["seed"], sample=exp["sample"])
    problem = spec.build()
    n = problem.grid.n_points
    out.write("norms.csv", _csv_text(["t", "norm"], zip(trajectory.times, trajectory.norms)))
    header = ["t", "x_star", "norm"] + [f"u1_{i}" for i in range(n)] + [f"u2_{i}" for i in range(n)]
    norm_at = dict(zip(trajectory.times.tolist(), trajectory.norms.tolist()))
    rows = [
        [t, v[-1], norm_at.get(t, math.nan), *v[: 2 * n]]
        for t, v in zip(trajectory.snapshot_times.tolist(), trajectory.snapshots)
    ]
    out.write("snapshots.csv", _csv_text(header, rows))
    if exp["lab_points"]:
        reach = problem.grid.length + float(np.max(np.abs(trajectory.snapshots[:, -1])))
        lab = np.linspace(-reach, reach, int(exp["lab_points"]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            field = reconstruct_physical(problem.grid, trajectory, lab)
        out.write(
            "lab_frame.csv",
            _csv_text(["t", *[f"z_{i}" for i in range(lab.size)]],
                      [[t, *row] for t, row in zip(trajectory.snapshot_times.tolist(), field)]),
        )
        out.write("lab_grid.csv", _csv_text(["z"], [[z] for z in lab.tolist()]))
    summary = trajectory.summary()
    return trajectory.status == "completed", summary


def _run_wz_convergence(config, out: _Outputs, threads: int) -> tuple[bool, dict]:
    exp, solver = config["experiment"], config["solver"]
    report = wz_convergence_study(
        problem_spec(config), solver["horizon"], solver["dt"], exp["m_list"], exp["n_list"], exp["samples"],
        p=exp["p"], radius=exp["radius"], epsilon=exp["epsilon"], seed=exp["seed"], threads=threads,
    )
    header = ["m", *[f"n={n}" for n in report.n_list]]
    for what in ("estimate", "standard_error"):
        rows = [[m, *row] for m, row in zip(report.m_list, report.matrix(what))]
        out.write(f"convergence_{what}.csv", _csv_text(header, rows))
    keys = [(m, n) for n in report.n_list for m in report.m_list]
    rows = [[i, *[report.errors[k][i] for k in keys]] for i in range(report.samples)]
    out.write("convergence_samples.csv", _csv_text(["sample", *[f"m={m},n={n}" for m, n in keys]], rows))
    return report.passed, report.to_dict()


def _run_phase_separation(config, out: _Outputs, threads: int) -> tuple[bool, dict]:
    exp, solver = config["experiment"], config["solver"]
    report = phase_separation_experiment(
        problem_spec(config), solver["horizon"], solver["dt"], exp["samples"], exp["m"], seed=exp["seed"],
        threads=threads, require_inward_pointing=exp["require_inward_pointing"], schemes=exp["schemes"],
    )
    schemes = list(report.margins)
    rows = [[i, *[report.margins[s][i] for s in schemes]] for i in range(exp["samples"])]
    out.write("margins.csv", _csv_text(["sample", *[f"{s}_min_margin" for s in schemes]], rows))
    return report.passed, report.to_dict()


def _run_ode_reduction(config, out: _Outputs, threads: int) -> tuple[bool, dict]:
    exp = config["experiment"]
    result = ode_reduction_check(
        sigma=exp["sigma"], horizon=exp["horizon"], m_list=exp["m_list"], samples=exp["samples"],
        ito_levels=exp["ito_levels"], fine_steps=exp["fine_steps"], x0=exp["x0"], seed=exp["seed"],
    )
    out.write("ito_errors.csv", _csv_text(["steps", "mean_abs_error"],
                                          zip(result["ito_levels"], result["ito_strong_errors"])))
    out.write("wz_gaps.csv", _csv_text(
        ["m", "uniform_gap", "endpoint_gap", "corrected_log_gap", "uncorrected_log_gap"],
        zip(result["m_list"], result["wz_uniform_gap"], result["wz_endpoint_gap"],
            result["corrected_mean_log_gap"], result["uncorrected_mean_log_gap"]),
    ))
    return all(result["checks"].values()), result


def _run_validate_assumptions(config, out: _Outputs, threads: int) -> tuple[bool, dict]:
    exp = config["experiment"]
    length = config["grid"]["length"]
    y = exp["y_range"]
    box = {"x": (-length, length, 41), "y": (-y, y, exp["lattice"]), "z": (-y, y, exp["lattice"])}
    report: AssumptionReport = validate_assumptions(problem_spec(config), exp["mode"], box, None, exp["kernel_order"])
    return report.passed, report.to_dict()


def _run_exit_time_consistency(config, out: _Outputs, threads: int) -> tuple[bool, dict]:
    exp, solver = config["experiment"], config["solver"]
    spec = problem_spec(config) if exp["families"] else None
    reports = exit_time_consistency(
        spec, solver["horizon"], solver["dt"], exp["m_list"], exp["families"], exp["radius_fraction"],
        seed=exp["seed"], threads=threads, synthetic=exp["synthetic"],
    )
    rows = []
    for r in reports:
        for k, (s, t) in enumerate(r.member_exits):
            rows.append([r.name, k, r.radius, s, t, r.distances[k]])
        rows.append([r.name, "limit", r.radius, *r.limit_exits, 0.0])
    out.write("exit_times.csv", _csv_text(["family", "member", "radius", "open_exit", "closed_exit", "sup_distance"], rows))
    payload = {"families": [r.to_dict() for r in reports], "passed": all(r.passed for r in reports)}
    return payload["passed"], payload


RUNNERS: dict[str, Callable[[dict, _Outputs, int], tuple[bool, dict]]] = {
    "simulate": _run_simulate,
    "wz_convergence": _run_wz_convergence,
    "phase_separation": _run_phase_separation,
    "ode_reduction": _run_ode_reduction,
    "validate_assumptions": _run_validate_assumptions,
    "exit_time_consistency": _run_exit_time_consistency,
}


# ---------------------------------------------------------------------------


def default_output_dir(config: Mapping[str, Any]) -> Path:
    root = os.environ.get(OUTPUT_ROOT_ENV, "stochstefan-runs")
    exp = config["experiment"]
    return Path(root) / f"{exp['name']}-seed{exp['seed']}"


def dispatch(config: Mapping[str, Any], out_dir: str | Path, threads: int = 1, dry_run: bool = False) -> int:
    """Run a resolved configuration; returns the exit status (0 pass, 1 fail)."""
    config = resolve_config(config)
    directory = Path(out_dir)
    directory.mkdir(parents=True, exist_ok=True)
    outputs = _Outputs(directory)
    name = config["experiment"]["name"]
    started = time.time()
    passed = True
    if not dry_run:
        passed, payload = RUNNERS[name](config, outputs, max(1, int(threads)))
        outputs.write("report.json", _json_text({"experiment": name, "passed": passed, "result": payload}))
    manifest = {
        "config": config,
        "seed": config["experiment"]["seed"],
        "version": __version__,
        "dry_run": dry_run,
        "runtime": {
            "started_unix": started,
            "wall_clock_seconds": time.time() - started,
            "threads": threads,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "outputs": outputs.files,
    }
    (directory / "manifest.json").write_text(_json_text(manifest), encoding="utf-8")
    return 0 if passed else 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="stochstefan", description=__doc__.splitlines()[0])
    parser.add_argument("--config", required=True, help="TOML configuration or a manifest.json to re-run")
    parser.add_argument("--seed", type=int, help="override [experiment] seed")
    parser.add_argument("--out", help=f"output directory (default: ${OUTPUT_ROOT_ENV}/<experiment>-seed<seed>)")
    parser.add_argument("--threads", type=int, default=1, help="worker processes for ensembles")
    parser.add_argument("--dry-run", action="store_true", help="resolve the configuration and write the manifest only")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        if args.threads < 1:
            raise ConfigurationError(f"--threads must be at least 1, got {args.threads}")
        config = parse_config(args.config)
        if args.seed is not None:
            config["experiment"]["seed"] = args.seed
            config = resolve_config(config)
        out = Path(args.out) if args.out else default_output_dir(config)
        log.info("running %s into %s", config["experiment"]["name"], out)
        status = dispatch(config, out, args.threads, args.dry_run)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except StochStefanError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 1
    if status:
        report = out / "report.json"
        print(f"experiment failed; see {report}", file=sys.stderr)
    return status


if __name__ == "__main__":
    sys.exit(main())
