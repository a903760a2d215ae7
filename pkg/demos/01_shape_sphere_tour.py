"""A walk around the shape sphere with the named orbits.

Each orbit is integrated in the plane, then projected to the moduli space:
the hyperradius rho and a unit vector n on the shape sphere.  The prints
show where the classical solutions sit.

Run with ``python demos/01_shape_sphere_tour.py``.
"""

import numpy as np

from shapemech import integrate, newton, project_trajectory, scenarios
from shapemech.integrator import IntegratorConfig

cfg = IntegratorConfig(horizon=6.0, sample_interval=0.01)

# Lagrange's rotating equilateral triangle never changes shape: its shape
# curve is a single point at a pole, and U* there is 1/(3 sqrt 3).
tri = scenarios.lagrange_circular()
pot = newton(tri.masses)
pc = project_trajectory(integrate(tri, pot, cfg))
print("Lagrange circular")
print(f"  n stays at {np.round(pc.n[0], 12)}, spread {np.ptp(pc.n, axis=0).max():.1e}")
print(f"  U* at the pole = {float(pot.ustar(pc.n[0])):.15f}")

# Collinear configurations have zero signed area, so they live on the equator.
tri = scenarios.euler_collinear()
pc = project_trajectory(integrate(tri, newton(tri.masses), cfg))
print("Euler collinear")
print(f"  max |n3| = {np.max(np.abs(pc.n[:, 2])):.1e}")

# A generic bounded orbit wanders over the sphere while rho breathes.
tri = scenarios.random_bounded()
pot = newton(tri.masses)
traj = integrate(tri, pot, cfg)
pc = project_trajectory(traj)
level = pc.level()
print("random-bounded")
print(f"  level h = {level.h:.6f}, omega = {level.omega:.6f}")
print(f"  rho ranges over [{pc.rho.min():.3f}, {pc.rho.max():.3f}]")
print(f"  shape curve length {pc.shape_curve().length:.3f} on the unit sphere")
print(f"  energy drift {traj.energy_drift():.1e}, momentum drift {traj.momentum_drift():.1e}")
