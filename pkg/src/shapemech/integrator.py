"""Direct integration of Newton's equation for three bodies in the plane.

This is the ground truth against which the reduced dynamics and the
reconstruction are checked.  Propagation uses an adaptive embedded
Runge-Kutta pair (DOP853) with dense output; samples on a uniform grid are
filled from the interpolant and annotated with the conserved quantities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ._ode import PiecewiseDense, propagate
from .errors import CollisionApproach, InvalidMasses, MissingVelocities, NotSupported, UndefinedShape
from .kinematics import MTriangle, hopf_jets, positions_to_jacobi, radial_jets
from .potential import HomogeneousPotential, pair_accelerations, pair_distances


@dataclass(frozen=True)
class IntegratorConfig:
    rel_tol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    horizon: float = 10.0
    sample_interval: float = 0.01
    collision_radius: float = 1e-6

    def __post_init__(self):
        if not (self.rel_tol > 0 and self.abs_tol > 0):
            raise ValueError("tolerances must be positive")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        if not (self.sample_interval > 0 and self.max_step > 0):
            raise ValueError("sample interval and max step must be positive")

    def sample_times(self) -> np.ndarray:
        count = int(math.floor(self.horizon / self.sample_interval + 1e-9))
        t = np.minimum(self.sample_interval * np.arange(count + 1), self.horizon)
        if self.horizon - t[-1] > 1e-9 * self.sample_interval:
            t = np.append(t, self.horizon)
        return t

    @classmethod
    def from_json(cls, obj: dict | None) -> "IntegratorConfig":
        obj = dict(obj or {})
        return cls(**{k: float(v) for k, v in obj.items()})


def accelerations(tri: MTriangle, pot: HomogeneousPotential) -> np.ndarray:
    """``(1/m_i) dU/da_i`` for each body, shape ``(3, 2)``."""
    return _forces(pot, tri.masses, tri.positions)


def _forces(pot, masses, positions):
    if pot.kind == "constant":
        return np.zeros_like(np.asarray(positions, dtype=float))
    if pot.pair_power is None:
        raise NotSupported(f"potential '{pot.kind}' has no force law")
    return pair_accelerations(masses, positions, pot.pair_power)


@dataclass(frozen=True)
class TrajectorySample:
    t: float
    tri: MTriangle
    inertia: float
    kinetic: float
    omega: float
    potential: float
    energy: float


@dataclass(eq=False)
class Trajectory:
    """Sampled solution of Newton's equation plus its dense interpolant."""

    t: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    potential: HomogeneousPotential
    dense: PiecewiseDense | None = None
    truncated: bool = False
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.diagnostics:
            self.diagnostics = conserved_quantities(self.masses, self.positions,
                                                    self.velocities, self.potential)

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i) -> TrajectorySample:
        d = self.diagnostics
        tri = MTriangle(self.masses, self.positions[i], self.velocities[i])
        return TrajectorySample(float(self.t[i]), tri, float(d["I"][i]), float(d["T"][i]),
                                float(d["Omega"][i]), float(d["U"][i]), float(d["h"][i]))

    def state_at(self, t):
        """Positions and velocities from the dense output at time(s) ``t``."""
        if self.dense is None:
            raise ValueError("trajectory has no dense output")
        y = self.dense(t)
        return y[..., :6].reshape(y.shape[:-1] + (3, 2)), y[..., 6:].reshape(y.shape[:-1] + (3, 2))

    def accelerations(self) -> np.ndarray:
        return _forces(self.potential, self.masses, self.positions)

    def energy_drift(self) -> float:
        h = self.diagnostics["h"]
        return float(np.max(np.abs(h - h[0])))

    def momentum_drift(self) -> float:
        om = self.diagnostics["Omega"]
        return float(np.max(np.abs(om - om[0])))


def conserved_quantities(masses, positions, velocities, pot) -> dict:
    m = np.asarray(masses)
    a, v = np.asarray(positions), np.asarray(velocities)
    inertia = np.sum(m * np.sum(a * a, axis=-1), axis=-1)
    kinetic = 0.5 * np.sum(m * np.sum(v * v, axis=-1), axis=-1)
    omega = np.sum(m * (a[..., 0] * v[..., 1] - a[..., 1] * v[..., 0]), axis=-1)
    if pot.kind == "constant":
        u = np.full(inertia.shape, np.nan)
    else:
        u = pot.value(a)
    return {"I": inertia, "T": kinetic, "Omega": omega, "U": u, "h": kinetic - u}


def integrate(tri0: MTriangle, pot: HomogeneousPotential, cfg: IntegratorConfig) -> Trajectory:
    """Propagate ``tri0`` over ``cfg.horizon``.

    Raises :class:`CollisionApproach` (carrying the partial trajectory) when
    a mutual distance drops below ``cfg.collision_radius``, and
    :class:`InvalidMasses` when ``pot`` was built for other masses.
    """
    if tri0.velocities is None:
        raise MissingVelocities("initial triangle needs velocities")
    masses = tri0.masses
    if pot.masses is not None and not np.allclose(pot.masses, masses, rtol=1e-12, atol=0.0):
        raise InvalidMasses("potential was built for different masses than the triangle")
    masses_tuple = tuple(masses)
    y0 = np.concatenate([tri0.positions.ravel(), tri0.velocities.ravel()])
    if np.min(pair_distances(tri0.positions)) < cfg.collision_radius:
        raise CollisionApproach("initial configuration is already a collision")

    def rhs(t, y):
        pos = y[:6].reshape(3, 2)
        return np.concatenate([y[6:], _forces(pot, masses_tuple, pos).ravel()])

    def check(t, y):
        r = pair_distances(y[:6].reshape(3, 2))
        if np.min(r) < cfg.collision_radius:
            return f"collision approach at t={t:.9g} (min distance {np.min(r):.3g})"
        return None

    run = propagate(rhs, y0, cfg.horizon, cfg.sample_times(), rtol=cfg.rel_tol,
                    atol=cfg.abs_tol, max_step=cfg.max_step, check=check)
    traj = Trajectory(run.t, run.y[:, :6].reshape(-1, 3, 2), run.y[:, 6:].reshape(-1, 3, 2),
                      masses, pot, run.dense, truncated=run.stopped is not None)
    if run.stopped:
        raise CollisionApproach(run.stopped, partial=traj)
    return traj


@dataclass(eq=False)
class ProjectedCurve:
    """Moduli and shape curve of a trajectory with exact time derivatives.

    Derivatives come from the state and the force law through the chain
    rule of the Hopf map, not from differencing samples.
    """

    t: np.ndarray
    rho: np.ndarray
    rhodot: np.ndarray
    rhoddot: np.ndarray
    n: np.ndarray
    ndot: np.ndarray
    nddot: np.ndarray
    omega: np.ndarray
    energy: np.ndarray
    exponent: float

    @property
    def v(self) -> np.ndarray:
        return np.linalg.norm(self.ndot, axis=-1)

    @property
    def phi(self) -> np.ndarray:
        return np.arctan2(np.hypot(self.n[:, 0], self.n[:, 1]), self.n[:, 2])

    @property
    def theta(self) -> np.ndarray:
        """Longitude, unwrapped so that it has no 2 pi jumps."""
        return np.unwrap(np.arctan2(self.n[:, 1], self.n[:, 0]))

    def chart_jets(self):
        """``(phi, theta, phidot, thetadot, phiddot, thetaddot)`` in the standard chart."""
        n, nd, ndd = self.n, self.ndot, self.nddot
        phi, theta = self.phi, self.theta
        s = np.sin(phi)
        phidot = -nd[:, 2] / s
        phiddot = -(ndd[:, 2] + np.cos(phi) * phidot ** 2) / s
        q = n[:, 0] ** 2 + n[:, 1] ** 2
        cr = n[:, 0] * nd[:, 1] - n[:, 1] * nd[:, 0]
        thetadot = cr / q
        thetaddot = ((n[:, 0] * ndd[:, 1] - n[:, 1] * ndd[:, 0]) / q
                     - 2.0 * (n[:, 0] * nd[:, 0] + n[:, 1] * nd[:, 1]) * cr / q ** 2)
        return phi, theta, phidot, thetadot, phiddot, thetaddot

    def level(self):
        from .moduli import EnergyMomentum
        om = float(self.omega[0])
        return EnergyMomentum(float(self.energy[0]), abs(om), self.exponent, -1 if om < 0 else 1)

    def state(self, i: int, level=None):
        from .moduli import ModuliState
        return ModuliState(float(self.rho[i]), float(self.rhodot[i]), self.n[i], self.ndot[i],
                           level or self.level())

    def shape_curve(self, *, keep_times: bool = True, keep_jets: bool = True):
        from .shape import ShapeCurve
        if not keep_times:
            return ShapeCurve(self.n)
        if keep_jets:
            return ShapeCurve(self.n, self.t, self.ndot, self.nddot)
        return ShapeCurve(self.n, self.t)

    def __len__(self):
        return len(self.t)


def project_trajectory(traj: Trajectory) -> ProjectedCurve:
    """Project every sample onto the moduli cone and the shape sphere."""
    m = traj.masses
    acc = traj.accelerations()
    z = positions_to_jacobi(m, traj.positions)
    zd = positions_to_jacobi(m, traj.velocities)
    zdd = positions_to_jacobi(m, acc)
    w, wd, wdd = hopf_jets(z, zd, zdd)
    if np.any(np.linalg.norm(w, axis=-1) == 0.0):
        raise UndefinedShape("trajectory passes through the triple collision")
    rho, rhod, rhodd, n, nd, ndd = radial_jets(w, wd, wdd)
    d = traj.diagnostics
    return ProjectedCurve(traj.t.copy(), rho, rhod, rhodd, n, nd, ndd, d["Omega"].copy(),
                          d["h"].copy(), traj.potential.exponent)
