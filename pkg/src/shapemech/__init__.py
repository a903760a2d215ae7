"""Planar three-body mechanics on the moduli cone and the shape sphere.

Submodules
----------
kinematics
    m-triangles, Jacobi vectors and the Hopf map.
potential
    Homogeneous potentials and their shape-sphere restriction.
integrator
    Direct integration of Newton's equation and projection to the moduli space.
moduli
    Reduced equations on the moduli cone and the dynamical metric.
shape
    Intrinsic geometry of curves on the shape sphere.
reconstruction
    Recovery of a motion from its geometric shape curve and level.
scenarios, cli
    Named orbits, scenario files and the command line front end.
"""

from .errors import *  # noqa: F401,F403
from .integrator import IntegratorConfig, Trajectory, integrate, project_trajectory
from .kinematics import MTriangle, hopf_project, to_jacobi
from .moduli import EnergyMomentum, ModuliState, integrate_reduced
from .potential import HomogeneousPotential, from_spec, inverse_square, newton, power_law
from .reconstruction import (congruence_residual, order2_verification, reconstruct_motion,
                             solve_along_curve, solve_rho)
from .scenarios import NAMED_ORBITS, load_scenario, named_orbit, parse_scenario
from .shape import ShapeCurve, intrinsic_table, is_exceptional

__version__ = "0.1.0"
