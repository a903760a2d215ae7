"""Recovering a motion from nothing but its shape curve.

Take a simulated orbit, keep only the unparametrized curve on the shape
sphere and the level (h, omega), and rebuild the size, the clock and the
planar motion.  The lifted motion is compared with the original up to a
rotation.

For the inverse-square force the same experiment needs one more number:
many motions share a curve and a level, differing in how fast the size
changes.
"""

import numpy as np
from scipy.interpolate import make_interp_spline

from shapemech import congruence_residual, reconstruct_motion, scenarios
from shapemech.errors import NotIdentifiable
from shapemech.integrator import IntegratorConfig, integrate, project_trajectory
from shapemech.potential import from_spec


def roundtrip(name, horizon, **options):
    tri = scenarios.named_orbit(name)
    pot = from_spec(scenarios.DEFAULT_POTENTIAL.get(name, {"kind": "newton"}), tri.masses)
    traj = integrate(tri, pot, IntegratorConfig(horizon=horizon, sample_interval=0.01))
    pc = project_trajectory(traj)
    timed = pc.shape_curve()
    curve = timed.strip_times()  # the only geometric input
    rec = reconstruct_motion(curve, pot, pc.level(), masses=traj.masses, **options)
    t_true = make_interp_spline(timed.arclength, pc.t, k=3)(rec.s)
    grid = pc.t[pc.t <= rec.t[-1]]
    pos, _ = rec.resample_in_time(grid)
    print(f"{name}: duration {rec.duration:.6f} (true {pc.t[-1]:.6f})")
    print(f"  clock error {np.max(np.abs(rec.t - t_true)) / pc.t[-1]:.1e} of the duration")
    print(f"  congruence residual "
          f"{congruence_residual(traj.positions[:len(grid)], pos, traj.masses):.1e}")
    return pc


roundtrip("random-bounded", 10.0)
roundtrip("escape", 5.0)

try:
    roundtrip("inverse-square-rotating", 2.5)
except NotIdentifiable as exc:
    print(f"inverse-square without extra data: {exc}")
tri = scenarios.inverse_square_rotating()
pc = project_trajectory(integrate(tri, from_spec({"kind": "inverse-square", "e": 2}, tri.masses),
                                  IntegratorConfig(horizon=2.5, sample_interval=0.01)))
roundtrip("inverse-square-rotating", 2.5, radial_rate=float(pc.rhodot[0]), samples=8192)
