"""Reduced dynamics on the moduli cone over the shape sphere.

The state is ``(rho, rhodot, n, ndot)`` with ``n`` on the unit sphere.  The
radial equation is the Lagrange-Jacobi form with the energy substituted,

    rhoddot = -rhodot**2 / rho + ((2 - e) U* / rho**e + 2 h) / rho,

and the shape equation is written chart-free in the ambient space,

    nddot = -|ndot|**2 n - (2 rhodot / rho) ndot + (4 / rho**(2 + e)) grad U*(n)
            - (2 Omega / rho**2) n x ndot.

The last term is the gyroscopic force of the rotation: the Hopf connection
has curvature, so with nonzero angular momentum the shape point moves like
a charge in a monopole field.  ``model="no-gyro"`` drops it; that form is
exact only for ``Omega = 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._ode import PiecewiseDense, propagate
from .errors import (
    ChartSingularity,
    ConeVertex,
    InadmissibleLevel,
    InconsistentLevel,
    OutsideHillRegion,
)
from .integrator import IntegratorConfig
from .potential import HomogeneousPotential, sphere_gradient

INIT_TOL = 1e-8


MODELS = ("full", "no-gyro")


@dataclass(frozen=True)
class EnergyMomentum:
    """Energy-momentum level ``(h, omega)`` with ``omega = |Omega| >= 0``.

    ``spin`` is the sign of the angular momentum, ``Omega = spin * omega``.
    Reflecting a motion flips it together with the shape hemisphere.
    """

    h: float
    omega: float
    e: float = 1.0
    spin: int = 1

    def __post_init__(self):
        if self.omega < 0:
            raise ValueError("omega is the magnitude of the angular momentum")
        if self.spin not in (1, -1):
            raise ValueError("spin must be +1 or -1")

    @property
    def signed_omega(self) -> float:
        return self.spin * self.omega

    def to_json(self) -> dict:
        return {"h": self.h, "omega": self.omega, "e": self.e, "spin": self.spin}

    @classmethod
    def from_json(cls, obj: dict) -> "EnergyMomentum":
        return cls(float(obj["h"]), float(obj["omega"]), float(obj.get("e", 1)),
                   int(obj.get("spin", 1)))


def _check_model(model: str):
    if model not in MODELS:
        raise ValueError(f"unknown model {model!r}; expected one of {MODELS}")


@dataclass(frozen=True, eq=False)
class ModuliState:
    rho: float
    rhodot: float
    n: np.ndarray
    ndot: np.ndarray
    level: EnergyMomentum

    def __post_init__(self):
        n = np.asarray(self.n, dtype=float)
        if abs(np.linalg.norm(n) - 1.0) > 1e-10:
            raise ValueError("shape vector must have unit length")
        nd = np.asarray(self.ndot, dtype=float)
        if abs(n @ nd) > 1e-10:
            raise ValueError("shape velocity must be tangent to the sphere")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "ndot", nd)

    @property
    def v(self) -> float:
        return float(np.linalg.norm(self.ndot))

    def chart(self):
        """``(phi, theta, phidot, thetadot)`` in the standard chart."""
        n, nd = self.n, self.ndot
        phi = math.atan2(math.hypot(n[0], n[1]), n[2])
        theta = math.atan2(n[1], n[0])
        q = n[0] ** 2 + n[1] ** 2
        if q == 0.0:
            raise ChartSingularity("state sits on the pole of the standard chart")
        return phi, theta, -nd[2] / math.sin(phi), (n[0] * nd[1] - n[1] * nd[0]) / q

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.rho, self.rhodot], self.n, self.ndot])


def energy_residual(rho, rhodot, v, ustar_value, level: EnergyMomentum):
    """Residual of the energy integral on the moduli space (zero on true motions)."""
    return (0.5 * rhodot ** 2 + rho ** 2 * v ** 2 / 8.0 + level.omega ** 2 / (2.0 * rho ** 2)
            - ustar_value / rho ** level.e - level.h)


def state_energy_residual(state: ModuliState, pot: HomogeneousPotential) -> float:
    return float(energy_residual(state.rho, state.rhodot, state.v, pot.ustar(state.n),
                                 state.level))


def _shape_accel(rho, rhodot, n, ndot, grad, e, big_omega=0.0):
    acc = (-np.dot(ndot, ndot) * n - (2.0 * rhodot / rho) * ndot
           + (4.0 / rho ** (2.0 + e)) * grad)
    if big_omega:
        acc = acc - (2.0 * big_omega / rho ** 2) * np.cross(n, ndot)
    return acc


def reduced_rhs(state: ModuliState, pot: HomogeneousPotential, model: str = "full"):
    """Return ``(rhoddot, nddot)`` for a moduli state."""
    _check_model(model)
    rho = state.rho
    if not rho > 0:
        raise ConeVertex("hyperradius must be positive")
    lv = state.level
    u = float(pot.ustar(state.n))
    rhoddot = -state.rhodot ** 2 / rho + ((2.0 - lv.e) * u / rho ** lv.e + 2.0 * lv.h) / rho
    grad = sphere_gradient(pot, state.n)
    om = lv.signed_omega if model == "full" else 0.0
    return rhoddot, _shape_accel(rho, state.rhodot, state.n, state.ndot, grad, lv.e, om)


def reduced_rhs_chart(rho, rhodot, phi, theta, phidot, thetadot, level: EnergyMomentum,
                      pot: HomogeneousPotential, chart=None, model: str = "full"):
    """Second derivatives ``(rhoddot, phiddot, thetaddot)`` in a spherical chart.

    The gyroscopic term is written for a right-handed chart frame.
    """
    from .potential import Chart, ustar_gradient

    _check_model(model)
    chart = chart or Chart.standard()
    chart.check(phi)
    n = chart.point(phi, theta)
    u = float(pot.ustar(n))
    u_phi, u_theta = ustar_gradient(pot, n, chart)
    e, h = level.e, level.h
    k = 4.0 / rho ** (2.0 + e)
    rhoddot = -rhodot ** 2 / rho + ((2.0 - e) * u / rho ** e + 2.0 * h) / rho
    phiddot = (-2.0 * rhodot / rho * phidot + 0.5 * math.sin(2 * phi) * thetadot ** 2
               + k * u_phi)
    thetaddot = (-2.0 * rhodot / rho * thetadot - 2.0 / math.tan(phi) * phidot * thetadot
                 + k * u_theta / math.sin(phi) ** 2)
    if model == "full":
        handed = float(np.sign(np.linalg.det(chart.rotation)))
        b = 2.0 * handed * level.signed_omega / rho ** 2
        phiddot += b * math.sin(phi) * thetadot
        thetaddot -= b * phidot / math.sin(phi)
    return rhoddot, phiddot, thetaddot


@dataclass(eq=False)
class ReducedTrajectory:
    t: np.ndarray
    rho: np.ndarray
    rhodot: np.ndarray
    n: np.ndarray
    ndot: np.ndarray
    level: EnergyMomentum
    energy_residual: np.ndarray
    dense: PiecewiseDense | None = None

    @property
    def v(self) -> np.ndarray:
        return np.linalg.norm(self.ndot, axis=-1)

    @property
    def phi(self) -> np.ndarray:
        return np.arctan2(np.hypot(self.n[:, 0], self.n[:, 1]), self.n[:, 2])

    @property
    def theta(self) -> np.ndarray:
        return np.unwrap(np.arctan2(self.n[:, 1], self.n[:, 0]))

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i) -> tuple[float, ModuliState]:
        return float(self.t[i]), ModuliState(float(self.rho[i]), float(self.rhodot[i]),
                                             self.n[i], self.ndot[i], self.level)


def _project_state(y):
    y = y.copy()
    n = y[2:5] / np.linalg.norm(y[2:5])
    y[2:5] = n
    y[5:8] -= (n @ y[5:8]) * n
    return y


def integrate_reduced(state0: ModuliState, pot: HomogeneousPotential,
                      cfg: IntegratorConfig, model: str = "full") -> ReducedTrajectory:
    """Propagate the reduced equations from a state on its energy level.

    The shape vector is renormalized after every accepted step; the energy
    residual is recorded at each sample but never projected out.
    """
    res0 = state_energy_residual(state0, pot)
    if abs(res0) > INIT_TOL:
        raise InconsistentLevel(
            f"initial state violates the energy integral of its level by {res0:.3g}")
    _check_model(model)
    lv = state0.level
    e, h = lv.e, lv.h
    om = lv.signed_omega if model == "full" else 0.0

    def rhs(t, y):
        rho, rhodot = y[0], y[1]
        if not rho > 0:
            raise ConeVertex(f"hyperradius reached {rho:.3g} at t={t:.6g}")
        n, nd = y[2:5], y[5:8]
        unit = n / np.linalg.norm(n)
        u = float(pot.ustar(unit))
        grad = sphere_gradient(pot, unit)
        rhoddot = -rhodot ** 2 / rho + ((2.0 - e) * u / rho ** e + 2.0 * h) / rho
        return np.concatenate([[rhodot, rhoddot], nd,
                               _shape_accel(rho, rhodot, n, nd, grad, e, om)])

    def check(t, y):
        if not y[0] > 0:
            return f"cone vertex reached at t={t:.6g}"
        return None

    run = propagate(rhs, state0.as_vector(), cfg.horizon, cfg.sample_times(),
                    rtol=cfg.rel_tol, atol=cfg.abs_tol, max_step=cfg.max_step,
                    project=_project_state, check=check)
    if run.stopped:
        raise ConeVertex(run.stopped)
    y = run.y
    rho, rhodot, n, nd = y[:, 0], y[:, 1], y[:, 2:5], y[:, 5:8]
    res = energy_residual(rho, rhodot, np.linalg.norm(nd, axis=-1), pot.ustar(n), lv)
    return ReducedTrajectory(run.t, rho, rhodot, n, nd, lv, res, run.dense)


def init_from_level(rho: float, n, direction, level: EnergyMomentum,
                    pot: HomogeneousPotential, shape_fraction: float = 0.5,
                    rhodot_sign: float = 1.0) -> ModuliState:
    """Build a state on the level ``(h, omega)`` at the moduli point ``(rho, n)``.

    The available reduced kinetic energy ``h + U*/rho**e - omega**2/(2 rho**2)``
    is split so that ``shape_fraction`` of it goes into shape motion along
    ``direction`` and the rest into radial motion.
    """
    if not 0.0 <= shape_fraction <= 1.0:
        raise ValueError("shape_fraction must lie in [0, 1]")
    n = np.asarray(n, dtype=float)
    tau = np.asarray(direction, dtype=float)
    if abs(np.linalg.norm(n) - 1) > 1e-10 or abs(np.linalg.norm(tau) - 1) > 1e-10 \
            or abs(n @ tau) > 1e-10:
        raise ValueError("direction must be a unit tangent vector at n")
    budget = (level.h + float(pot.ustar(n)) / rho ** level.e
              - level.omega ** 2 / (2.0 * rho ** 2))
    if budget < 0:
        raise InadmissibleLevel(f"moduli point lies outside the Hill region (deficit {budget:.3g})")
    v = math.sqrt(8.0 * shape_fraction * budget) / rho
    rhodot = math.copysign(math.sqrt(2.0 * (1.0 - shape_fraction) * budget), rhodot_sign)
    return ModuliState(float(rho), rhodot, n, v * tau, level)


# ---------------------------------------------------------------------------
# Metrics and action


def _conformal_factor(rho, n, level, pot):
    ubar_plus_h = (pot.ustar(n) / rho ** level.e - level.omega ** 2 / (2.0 * rho ** 2)
                   + level.h)
    if np.any(ubar_plus_h < -1e-12):
        k = int(np.argmin(ubar_plus_h))
        raise OutsideHillRegion(f"curve leaves the Hill region at sample {k}")
    return np.sqrt(np.clip(ubar_plus_h, 0.0, None))


def dynamical_length(curve, level: EnergyMomentum, pot: HomogeneousPotential) -> float:
    """Length of a timed moduli curve in the dynamical metric.

    ``curve`` provides ``t, rho, rhodot, n, ndot`` (a reduced or projected
    trajectory).  The integrand is ``sqrt(Ubar + h) * dsbar/dt`` with the
    orbital distance speed ``sqrt(rhodot**2 + rho**2 |ndot|**2 / 4)``.
    """
    t = np.asarray(curve.t)
    if len(t) < 2:
        return 0.0
    speed = np.sqrt(curve.rhodot ** 2 + curve.rho ** 2 * np.sum(curve.ndot ** 2, -1) / 4.0)
    return float(np.trapezoid(_conformal_factor(curve.rho, curve.n, level, pot) * speed, t))


def dynamical_length_geometric(rho, n, level: EnergyMomentum, pot: HomogeneousPotential) -> float:
    """Parametrization-free dynamical length of a sampled moduli curve.

    Segments are measured as chords of ``w = rho**2 n`` (where the orbital
    distance metric is ``|dw|**2 / (4 rho**2)``) with midpoint factors.
    """
    rho = np.asarray(rho, dtype=float)
    n = np.asarray(n, dtype=float)
    if len(rho) < 2:
        return 0.0
    w = rho[:, None] ** 2 * n
    mid = 0.5 * (w[1:] + w[:-1])
    mid_norm = np.linalg.norm(mid, axis=-1)
    ds = np.linalg.norm(np.diff(w, axis=0), axis=-1) / (2.0 * np.sqrt(mid_norm))
    factor = _conformal_factor(np.sqrt(mid_norm), mid / mid_norm[:, None], level, pot)
    return float(np.sum(factor * ds))


def kinetic_action(curve) -> float:
    """``sqrt(2) * integral of Tbar dt`` along a timed moduli curve."""
    tbar = 0.5 * curve.rhodot ** 2 + curve.rho ** 2 * np.sum(curve.ndot ** 2, -1) / 8.0
    return float(math.sqrt(2.0) * np.trapezoid(tbar, curve.t))
