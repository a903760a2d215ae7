"""Scenario-driven command line front end.

Every subcommand reads one or more scenario files (``--scenario``, repeatable)
and writes deterministic CSV and JSON files under ``--out/<scenario name>``.
Exit status is 0 on success, 1 on a numerical failure and 2 on a
configuration error.  ``SHAPE_MECH_LOG`` sets the log level.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from scipy.interpolate import make_interp_spline

from .errors import (CollisionApproach, ConfigurationError, DegenerateCurve, ExceptionalShape,
                     NumericalFailure, SchemaError, ScenarioError, ShapeMechError)
from .integrator import IntegratorConfig, conserved_quantities, integrate, project_trajectory
from .kinematics import hopf, positions_to_jacobi
from .moduli import ModuliState, energy_residual, integrate_reduced
from .potential import Chart
from .reconstruction import congruence_residual, reconstruct_motion
from .scenarios import EQUAL, NAMED_ORBITS, Scenario, load_scenario, parse_scenario
from .shape import ShapeCurve, is_exceptional

log = logging.getLogger("shapemech")

TRAJECTORY_COLUMNS = (["t"] + [f"{c}{i}" for i in (1, 2, 3) for c in ("x", "y")]
                      + [f"v{c}{i}" for i in (1, 2, 3) for c in ("x", "y")]
                      + ["I", "T", "Omega", "U", "h"])
MODULI_COLUMNS = ["t", "rho", "rhodot", "phi", "theta", "v", "energy_residual"]
GRID_DEFAULT = (91, 181)


# ---------------------------------------------------------------------------
# File formats


def _fmt(x) -> str:
    return f"{float(x):.17g}"


def _csv_text(columns, rows, header_lines=()) -> str:
    buf = io.StringIO()
    for line in header_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _json_text(obj) -> str:
    return json.dumps(_plain(obj), indent=2, sort_keys=True) + "\n"


def _plain(obj):
    """Convert numpy scalars and arrays, and non-finite floats, for JSON output."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def trajectory_csv(t, positions, velocities, masses, pot) -> str:
    """Trajectory rows ``t, x1, y1, ..., vy3, I, T, Omega, U, h``."""
    q = conserved_quantities(masses, positions, velocities, pot)
    cols = [np.asarray(t)[:, None], np.asarray(positions).reshape(len(t), 6),
            np.asarray(velocities).reshape(len(t), 6)]
    cols += [q[k][:, None] for k in ("I", "T", "Omega", "U", "h")]
    masses_line = "masses=" + ",".join(_fmt(m) for m in masses)
    return _csv_text(TRAJECTORY_COLUMNS, np.hstack(cols), [masses_line])


def read_table(path: Path, required) -> tuple[dict, dict]:
    """Read a CSV with ``# key=value`` header lines; returns ``(columns, header)``."""
    try:
        text = Path(path).read_text()
    except FileNotFoundError:
        raise ScenarioError(f"input file {path} not found") from None
    header, body = {}, []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            header[key.strip()] = value.strip()
        elif line.strip():
            body.append(line)
    if not body:
        raise SchemaError(f"{path}: no header row")
    reader = csv.reader(body)
    names = next(reader)
    missing = [c for c in required if c not in names]
    if missing:
        raise SchemaError(f"{path}: missing columns {missing}")
    try:
        data = np.array([[float(x) for x in row] for row in reader], dtype=float)
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric entry ({exc})") from exc
    data = data.reshape(-1, len(names))
    return {name: data[:, k] for k, name in enumerate(names)}, header


def _moduli_rows(t, rho, rhodot, n, ndot, resid):
    phi = np.arctan2(np.hypot(n[:, 0], n[:, 1]), n[:, 2])
    theta = np.unwrap(np.arctan2(n[:, 1], n[:, 0]))
    v = np.linalg.norm(ndot, axis=1)
    return np.column_stack([t, rho, rhodot, phi, theta, v, resid])


def _shape_csv(t, n, curve: ShapeCurve | None = None) -> str:
    """Curve file ``s, nx, ny, nz``; a constant shape falls back to ``t, phi, theta``."""
    curve = curve or ShapeCurve(n)
    try:
        s = curve.arclength
    except DegenerateCurve:
        s = None
    if s is not None:
        return _csv_text(["s", "nx", "ny", "nz"], np.column_stack([s, n]), ["orientation=+1"])
    phi = np.arctan2(np.hypot(n[:, 0], n[:, 1]), n[:, 2])
    theta = np.unwrap(np.arctan2(n[:, 1], n[:, 0]))
    return _csv_text(["t", "phi", "theta"], np.column_stack([t, phi, theta]), ["orientation=+1"])


# ---------------------------------------------------------------------------
# Subcommands.  Each returns a JSON-ready summary and writes into ``out``.


def _require_triangle(sc: Scenario):
    if sc.triangle is None or not sc.triangle.has_velocities:
        raise ScenarioError(f"scenario '{sc.name}' needs a triangle initial condition "
                            "with velocities")


def run_simulate(sc: Scenario, out: Path) -> dict:
    _require_triangle(sc)
    pot = sc.build_potential()
    truncated, reason = False, None
    try:
        traj = integrate(sc.triangle, pot, sc.integrator)
    except CollisionApproach as exc:
        if exc.partial is None or len(exc.partial) < 2:
            raise
        traj, truncated, reason = exc.partial, True, str(exc)
    _write(out / "trajectory.csv", trajectory_csv(traj.t, traj.positions, traj.velocities,
                                                  traj.masses, pot))
    pc = project_trajectory(traj)
    resid = energy_residual(pc.rho, pc.rhodot, pc.v, pot.ustar(pc.n), pc.level())
    _write(out / "moduli.csv", _csv_text(MODULI_COLUMNS, _moduli_rows(
        pc.t, pc.rho, pc.rhodot, pc.n, pc.ndot, resid)))
    text = _shape_csv(pc.t, pc.n, pc.shape_curve())
    _write(out / "shape.csv", text)
    report = {
        "scenario": sc.name, "seed": sc.seed, "samples": len(traj),
        "energy_drift": traj.energy_drift(), "momentum_drift": traj.momentum_drift(),
        "level": pc.level().to_json(), "truncated": truncated, "truncation": reason,
        "max_abs_energy_residual": float(np.max(np.abs(resid))),
        "shape_spread": float(np.max(np.linalg.norm(pc.n - pc.n[0], axis=1))),
        "max_abs_n3": float(np.max(np.abs(pc.n[:, 2]))),
    }
    _write(out / "diagnostics.json", _json_text(report))
    return {"status": "truncated" if truncated else "ok", **report}


def _initial_moduli(sc: Scenario, pot) -> ModuliState:
    if sc.moduli is not None:
        return sc.moduli
    _require_triangle(sc)
    cfg = IntegratorConfig(horizon=sc.integrator.sample_interval,
                           sample_interval=sc.integrator.sample_interval)
    pc = project_trajectory(integrate(sc.triangle, pot, cfg))
    return pc.state(0)


def run_reduce(sc: Scenario, out: Path) -> dict:
    pot = sc.build_potential()
    state = _initial_moduli(sc, pot)
    model = sc.reconstruction.get("model", "full")
    red = integrate_reduced(state, pot, sc.integrator, model=model)
    _write(out / "reduced_moduli.csv", _csv_text(MODULI_COLUMNS, _moduli_rows(
        red.t, red.rho, red.rhodot, red.n, red.ndot, red.energy_residual)))
    _write(out / "reduced_shape.csv", _shape_csv(red.t, red.n))
    report = {"scenario": sc.name, "model": model, "samples": len(red),
              "level": state.level.to_json(),
              "max_abs_energy_residual": float(np.max(np.abs(red.energy_residual)))}
    _write(out / "reduced_diagnostics.json", _json_text(report))
    return {"status": "ok", **report}


def _reconstruct_options(sc: Scenario) -> dict:
    opts = dict(sc.reconstruction)
    allowed = {"model", "samples", "root_policy", "radial_rate", "rho_bounds"}
    unknown = set(opts) - allowed
    if unknown:
        raise SchemaError(f"unknown reconstruction options {sorted(unknown)}")
    if "rho_bounds" in opts:
        opts["rho_bounds"] = tuple(float(x) for x in opts["rho_bounds"])
    if "samples" in opts:
        opts["samples"] = int(opts["samples"])
    return opts


def run_reconstruct(sc: Scenario, out: Path) -> dict:
    if sc.curve_path is None:
        raise ScenarioError(f"scenario '{sc.name}' needs a curve initial condition")
    pot = sc.build_potential()
    curve = ShapeCurve.from_csv(sc.curve_path).strip_times()
    masses = np.asarray(sc.masses, dtype=float)
    rec = reconstruct_motion(curve, pot, sc.level, masses=masses, **_reconstruct_options(sc))
    _write(out / "trajectory.csv", trajectory_csv(rec.t, rec.positions, rec.velocities,
                                                  rec.lift.masses, pot))
    report = {"scenario": sc.name, "level": sc.level.to_json(), **rec.diagnostics}
    _write(out / "diagnostics.json", _json_text(report))
    return {"status": "ok", **report}


def run_roundtrip(sc: Scenario, out: Path) -> dict:
    """Integrate, project, strip the times, reconstruct and compare."""
    _require_triangle(sc)
    pot = sc.build_potential()
    truncated = False
    try:
        traj = integrate(sc.triangle, pot, sc.integrator)
    except CollisionApproach as exc:
        if exc.partial is None or len(exc.partial) < 16:
            raise
        traj, truncated = exc.partial, True
    pc = project_trajectory(traj)
    level = pc.level()
    report = {"scenario": sc.name, "seed": sc.seed, "level": level.to_json(),
              "truncated": truncated}
    timed = pc.shape_curve()
    try:
        if is_exceptional(timed.strip_times(), pot=pot):
            raise ExceptionalShape("shape curve lies on a geodesic or is a point")
        s_true = timed.arclength
        opts = _reconstruct_options(sc)
        if level.e == 2:
            # the size family is not identifiable from the curve alone
            opts.setdefault("radial_rate", float(pc.rhodot[0]))
        rec = reconstruct_motion(timed.strip_times(), pot, level, masses=traj.masses, **opts)
    except ExceptionalShape as exc:
        report.update(status="skipped", reason="exceptional", detail=str(exc))
        _write(out / "report.json", _json_text(report))
        return report
    t_true = make_interp_spline(s_true, pc.t, k=3)(rec.s)
    rho_true = make_interp_spline(s_true, pc.rho, k=3)(rec.s)
    duration = float(pc.t[-1])
    grid = pc.t[pc.t <= rec.t[-1]]
    pos, _ = rec.resample_in_time(grid)
    cases, counts = np.unique(rec.root_case.astype(str), return_counts=True)
    report.update(
        status="ok",
        max_time_error=float(np.max(np.abs(rec.t - t_true)) / duration),
        max_rho_error=float(np.max(np.abs(rec.rho / rho_true - 1.0))),
        congruence_residual=congruence_residual(traj.positions[:len(grid)], pos, traj.masses),
        root_cases={str(c): int(k) for c, k in zip(cases, counts)},
        per_sample_root_case=[str(c) for c in rec.root_case],
        diagnostics=rec.diagnostics,
    )
    _write(out / "report.json", _json_text(report))
    return report


def emit_plotdata(trajectory: Path, out: Path) -> dict:
    """Shape path in 3-D, hyperradius and energy residual from a trajectory CSV."""
    cols, header = read_table(trajectory, TRAJECTORY_COLUMNS[:13] + ["I", "h"])
    if "masses" in header:
        masses = np.array([float(m) for m in header["masses"].split(",")])
    else:
        log.warning("%s has no masses header; assuming equal masses", trajectory)
        masses = np.array(EQUAL)
    t = cols["t"]
    pos = np.stack([np.column_stack([cols[f"x{i}"], cols[f"y{i}"]]) for i in (1, 2, 3)], 1)
    w = hopf(positions_to_jacobi(masses, pos))
    norm = np.linalg.norm(w, axis=1)
    if np.any(norm == 0):
        raise NumericalFailure("trajectory passes through the triple collision")
    n = w / norm[:, None]
    _write(out / "shape_path.csv", _csv_text(["t", "nx", "ny", "nz"], np.column_stack([t, n])))
    _write(out / "rho.csv", _csv_text(["t", "rho"], np.column_stack([t, np.sqrt(cols["I"])])))
    h = cols["h"]
    _write(out / "energy_residual.csv",
           _csv_text(["t", "energy_residual"], np.column_stack([t, h - h[0]])))
    return {"status": "ok", "samples": len(t), "source": str(trajectory)}


def run_plotdata(sc: Scenario, out: Path) -> dict:
    source = out / "trajectory.csv"
    if not source.exists():
        run_simulate(sc, out)
    return emit_plotdata(source, out)


def potential_grid(pot, n_phi: int, n_theta: int) -> str:
    """``U*`` on a ``phi x theta`` grid in the standard chart, as CSV text."""
    if n_phi < 2 or n_theta < 2:
        raise ConfigurationError("grid needs at least two points per axis")
    chart = Chart.standard()
    phi = np.linspace(0.0, math.pi, n_phi)
    theta = np.linspace(-math.pi, math.pi, n_theta)
    rows = []
    for p in phi:
        pts = np.array([chart.point(p, t) for t in theta])
        with np.errstate(divide="ignore", invalid="ignore"):
            try:
                u = np.asarray(pot.ustar(pts), dtype=float)
            except ShapeMechError:
                # binary collisions on the equator: evaluate pointwise
                u = np.array([_safe_ustar(pot, q) for q in pts])
        rows.extend(zip(np.full(n_theta, p), theta, u))
    return _csv_text(["phi", "theta", "ustar"], rows)


def _safe_ustar(pot, q) -> float:
    try:
        return float(pot.ustar(q))
    except ShapeMechError:
        return math.inf


def run_potential_grid(sc: Scenario, out: Path, shape=None) -> dict:
    n_phi, n_theta = shape or GRID_DEFAULT
    pot = sc.build_potential()
    _write(out / "potential_grid.csv", potential_grid(pot, n_phi, n_theta))
    return {"status": "ok", "n_phi": n_phi, "n_theta": n_theta, "potential": pot.to_json()}


COMMANDS = {
    "simulate": run_simulate,
    "reduce": run_reduce,
    "reconstruct": run_reconstruct,
    "roundtrip": run_roundtrip,
    "plotdata": run_plotdata,
    "potential-grid": run_potential_grid,
}


# ---------------------------------------------------------------------------
# Driver


def _load(spec: str, seed: int | None) -> Scenario:
    """A scenario file, or the name of a built-in orbit."""
    path = Path(spec)
    if not path.exists() and spec in NAMED_ORBITS:
        return parse_scenario({"orbit": spec}, seed=seed)
    return load_scenario(path, seed)


def _run_one(command: str, spec: str, out: str, seed: int | None, extra: dict) -> tuple:
    """Run one scenario; returns ``(exit code, summary)`` and never raises."""
    _configure_logging()
    try:
        sc = _load(spec, seed)
        target = Path(out) / sc.name
        if command == "plotdata" and extra.get("trajectory"):
            summary = emit_plotdata(Path(extra["trajectory"]), target)
        elif command == "potential-grid":
            summary = run_potential_grid(sc, target, extra.get("grid"))
        else:
            summary = COMMANDS[command](sc, target)
        return 0, summary
    except ConfigurationError as exc:
        log.error("%s: %s", spec, exc)
        return 2, {"status": "error", "kind": "configuration", "error": str(exc)}
    except (NumericalFailure, ArithmeticError) as exc:
        log.error("%s: numerical failure: %s", spec, exc)
        return 1, {"status": "error", "kind": "numerical", "error": str(exc),
                   "type": type(exc).__name__}


def _configure_logging():
    level = os.environ.get("SHAPE_MECH_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="shapemech", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--scenario", action="append", required=name != "plotdata",
                       default=None, help="scenario JSON file or built-in orbit name")
        p.add_argument("--out", default="out", help="output directory")
        p.add_argument("--seed", type=_u64, default=None, help="override the scenario seed")
        p.add_argument("--jobs", type=_positive, default=1, help="scenarios run concurrently")
        if name == "plotdata":
            p.add_argument("--trajectory", help="existing trajectory CSV to derive from")
        if name == "potential-grid":
            p.add_argument("--grid", type=int, nargs=2, metavar=("NPHI", "NTHETA"),
                           default=None)
    return parser


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _positive(text: str) -> int:
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError("must be at least 1")
    return value


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _configure_logging()
    extra = {"trajectory": getattr(args, "trajectory", None), "grid": getattr(args, "grid", None)}
    specs = args.scenario or []
    if args.command == "plotdata" and not specs:
        if not extra["trajectory"]:
            log.error("plotdata needs --scenario or --trajectory")
            return 2
        specs = [None]
    jobs = [(args.command, spec, args.out, args.seed, extra) for spec in specs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_star, jobs))
    else:
        results = [_star(job) for job in jobs]
    for spec, (code, summary) in zip(specs, results):
        slim = {k: v for k, v in summary.items() if k != "per_sample_root_case"}
        print(json.dumps({"scenario": spec, "exit": code, **_plain(slim)}, sort_keys=True))
    return max(code for code, _ in results)


def _star(job):
    command, spec, out, seed, extra = job
    if spec is None:
        return _plotdata_only(out, extra)
    return _run_one(command, spec, out, seed, extra)


def _plotdata_only(out, extra):
    try:
        source = Path(extra["trajectory"])
        return 0, emit_plotdata(source, Path(out) / source.stem)
    except ConfigurationError as exc:
        log.error("%s", exc)
        return 2, {"status": "error", "kind": "configuration", "error": str(exc)}
    except NumericalFailure as exc:
        log.error("%s", exc)
        return 1, {"status": "error", "kind": "numerical", "error": str(exc)}


if __name__ == "__main__":
    sys.exit(main())
