"""Shared fixtures: expensive ground-truth orbits are integrated once per session."""

from __future__ import annotations

import functools
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

from shapemech import integrator, potential, scenarios  # noqa: E402

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_PARTS: dict[int, list[tuple[bool, str]]] = {}


def record_acceptance(number: int, passed: bool, detail: str):
    """Add one measured part of an acceptance criterion; any failing part fails it."""
    ACCEPTANCE_PARTS.setdefault(number, []).append((bool(passed), detail))


def acceptance_lines() -> list[str]:
    lines = []
    for k in sorted(ACCEPTANCE_PARTS):
        parts = ACCEPTANCE_PARTS[k]
        verdict = "PASS" if all(ok for ok, _ in parts) else "FAIL"
        detail = "; ".join(f"{d} [{'ok' if ok else 'fail'}]" for ok, d in parts)
        lines.append(f"CRITERION {k} {verdict}: {detail}")
    return lines


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_PARTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in acceptance_lines():
        terminalreporter.write_line(line)


@functools.lru_cache(maxsize=None)
def orbit(name: str, seed: int = scenarios.DEFAULT_SEED, horizon: float = 10.0,
          interval: float = 0.01, spinless: bool = False, scale: float = 1.0):
    """Integrated and projected orbit ``(tri, pot, traj, projected)``, cached."""
    tri = scenarios.named_orbit(name, seed)
    if spinless:
        tri = scenarios.without_rotation(tri, scale)
    spec = scenarios.DEFAULT_POTENTIAL.get(name, {"kind": "newton", "e": 1})
    pot = potential.from_spec(spec, tri.masses)
    cfg = integrator.IntegratorConfig(horizon=horizon, sample_interval=interval)
    traj = integrator.integrate(tri, pot, cfg)
    return tri, pot, traj, integrator.project_trajectory(traj)


@pytest.fixture(scope="session")
def bounded():
    return orbit("random-bounded")


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(12345)


def roundtrip_errors(traj, pc, pot, **options):
    """Reconstruct from the time-stripped curve; return ``(rec, errors)``.

    Errors are the relative time error (over the duration), the relative
    size error at the reconstructed samples and the congruence residual
    on the shared time grid.
    """
    from scipy.interpolate import make_interp_spline

    from shapemech.reconstruction import congruence_residual, reconstruct_motion

    timed = pc.shape_curve()
    rec = reconstruct_motion(timed.strip_times(), pot, pc.level(), masses=traj.masses, **options)
    s_true = timed.arclength
    t_true = make_interp_spline(s_true, pc.t, k=3)(rec.s)
    rho_true = make_interp_spline(s_true, pc.rho, k=3)(rec.s)
    grid = pc.t[pc.t <= rec.t[-1]]
    pos, _ = rec.resample_in_time(grid)
    errors = {
        "time": float(np.max(np.abs(rec.t - t_true)) / pc.t[-1]),
        "rho": float(np.max(np.abs(rec.rho / rho_true - 1.0))),
        "congruence": congruence_residual(traj.positions[:len(grid)], pos, traj.masses),
    }
    return rec, errors
