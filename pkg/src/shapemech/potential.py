"""Homogeneous potentials ``U = U*(n) / rho**e`` and their shape-sphere calculus.

Built-in potentials are pair sums ``sum m_i m_j / r_ij**e``; ``e = 1`` is the
Newtonian potential and ``e = 2`` the inverse-square analog.  ``U*`` is
evaluated by lifting a unit shape vector to a concrete triangle with
``rho = 1``.  Gradients on the unit sphere are analytic for the built-ins
(pushed forward from the Newtonian force through the Hopf map) and by
Richardson-extrapolated central differences otherwise.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import BinaryCollision, ChartSingularity, NotSupported, SchemaError
from .kinematics import (
    MTriangle,
    hopf_gradients,
    jacobi_to_positions,
    normalize_masses,
    positions_to_jacobi,
    real_dot,
    unit_lift,
)

FD_STEP = 1e-5
CHART_CAP = 1e-3
_PAIRS = ((0, 1), (0, 2), (1, 2))


@dataclass(frozen=True, eq=False)
class HomogeneousPotential:
    """A rotation-invariant potential homogeneous of degree ``-exponent``.

    ``evaluator`` maps unit shape vectors ``(..., 3)`` to ``U*``.  Built-ins
    additionally carry ``masses`` and a pair-sum power so that the
    position-space potential and forces are available to the direct
    integrator.
    """

    exponent: float
    evaluator: Callable[[np.ndarray], np.ndarray]
    masses: np.ndarray | None = None
    kind: str = "custom"
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    pair_power: float | None = None

    def __post_init__(self):
        if not self.exponent > 0:
            raise SchemaError(f"homogeneity exponent must be positive, got {self.exponent}")

    @property
    def has_forces(self) -> bool:
        return self.pair_power is not None or self.kind == "constant"

    def value(self, positions) -> np.ndarray:
        """Position-space potential for positions ``(..., 3, 2)``."""
        if self.kind == "constant":
            raise NotSupported("constant test potential has no position-space form")
        if self.pair_power is None:
            raise NotSupported(f"potential '{self.kind}' has no position-space form")
        return pair_sum(self.masses, positions, self.pair_power)

    def ustar(self, n) -> np.ndarray:
        return self.evaluator(np.asarray(n, dtype=float))

    def to_json(self) -> dict:
        out = {"kind": self.kind, "e": self.exponent}
        if self.kind == "constant":
            out["c"] = float(self.evaluator(np.array([0.0, 0.0, 1.0])))
        return out


def pair_distances(positions) -> np.ndarray:
    a = np.asarray(positions, dtype=float)
    return np.stack([np.linalg.norm(a[..., i, :] - a[..., j, :], axis=-1)
                     for i, j in _PAIRS], axis=-1)


def _check_collisions(r: np.ndarray):
    hit = np.argwhere(np.asarray(r) == 0.0)
    if hit.size:
        i, j = _PAIRS[int(hit[0][-1])]
        raise BinaryCollision((i + 1, j + 1))


def pair_sum(masses, positions, power: float) -> np.ndarray:
    r = pair_distances(positions)
    _check_collisions(r)
    m = masses
    w = np.array([m[0] * m[1], m[0] * m[2], m[1] * m[2]])
    return np.sum(w / r ** power, axis=-1)


def pair_accelerations(masses, positions, power: float) -> np.ndarray:
    """Accelerations ``(1/m_i) dU/da_i`` for the pair sum with exponent ``power``."""
    a = np.asarray(positions, dtype=float)
    acc = np.zeros_like(a)
    for i, j in _PAIRS:
        d = a[..., j, :] - a[..., i, :]
        r = np.linalg.norm(d, axis=-1)
        if np.any(r == 0.0):
            raise BinaryCollision((i + 1, j + 1))
        f = power * d / r[..., None] ** (power + 2)
        acc[..., i, :] += masses[j] * f
        acc[..., j, :] -= masses[i] * f
    return acc


def _pair_ustar(masses, power):
    def evaluate(n):
        pos = jacobi_to_positions(masses, unit_lift(n))
        return pair_sum(masses, pos, power)
    return evaluate


def _pair_gradient(masses, power):
    def gradient(n):
        n = np.asarray(n, dtype=float)
        z = unit_lift(n)
        pos = jacobi_to_positions(masses, z)
        acc = pair_accelerations(masses, pos, power)
        gz = positions_to_jacobi(masses, acc)
        # dU/dw_i = <grad_z U, grad_z w_i> / (4 |z|^2) with |z| = 1
        dudw = real_dot(hopf_gradients(z), gz[..., None, :]) / 4.0
        return dudw - np.sum(dudw * n, axis=-1)[..., None] * n
    return gradient


def power_law(masses, e: float) -> HomogeneousPotential:
    """Pair-sum potential ``sum m_i m_j / r_ij**e``.

    Exponents other than 1 and 2 are accepted but not covered by tests.
    """
    m = normalize_masses(masses)
    if e not in (1, 2):
        warnings.warn(f"power-law exponent {e} is outside the tested set {{1, 2}}",
                      stacklevel=2)
    kind = {1: "newton", 2: "inverse-square"}.get(e, "power-law")
    return HomogeneousPotential(float(e), _pair_ustar(m, e), m, kind, _pair_gradient(m, e), e)


def newton(masses) -> HomogeneousPotential:
    return power_law(masses, 1)


def inverse_square(masses) -> HomogeneousPotential:
    return power_law(masses, 2)


def constant(c: float, e: float = 1.0) -> HomogeneousPotential:
    """``U* == c``; a test potential with vanishing gradient."""
    def evaluate(n):
        return np.full(np.shape(n)[:-1], float(c))

    def gradient(n):
        return np.zeros(np.shape(n))

    return HomogeneousPotential(float(e), evaluate, None, "constant", gradient, None)


def from_spec(spec: dict, masses=None) -> HomogeneousPotential:
    """Build a potential from ``{"kind": ..., "e": ..., "c": ...}``."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise SchemaError(f"potential spec needs a 'kind': {spec!r}")
    kind = spec["kind"]
    if kind == "constant":
        return constant(float(spec.get("c", 1.0)), float(spec.get("e", 1)))
    if masses is None:
        raise SchemaError(f"potential '{kind}' needs masses")
    if kind == "newton":
        e = spec.get("e", 1)
        if e != 1:
            raise SchemaError("the Newtonian potential has e = 1")
        return newton(masses)
    if kind == "inverse-square":
        e = spec.get("e", 2)
        if e != 2:
            raise SchemaError("the inverse-square potential has e = 2")
        return inverse_square(masses)
    raise SchemaError(f"unknown potential kind {kind!r}")


# ---------------------------------------------------------------------------
# Operations


def newton_potential(tri: MTriangle) -> float:
    """``sum_{i<j} m_i m_j / r_ij`` with unit gravitational constant."""
    return float(pair_sum(tri.masses, tri.positions, 1))


def _check_unit(n) -> np.ndarray:
    n = np.asarray(n, dtype=float)
    norm = np.linalg.norm(n, axis=-1)
    if np.any(np.abs(norm - 1.0) > 1e-8):
        raise ValueError("shape vector must have unit length")
    return n / norm[..., None]


def ustar(pot: HomogeneousPotential, n) -> float:
    """Restriction of the potential to the unit shape sphere."""
    return float(pot.ustar(_check_unit(n)))


def _tangent_basis(n):
    n = np.asarray(n, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    return e1, np.cross(n, e1)


def _geodesic_slope(pot, n, e, h):
    def f(t):
        return float(pot.ustar(math.cos(t) * n + math.sin(t) * e))
    d1 = (f(h) - f(-h)) / (2 * h)
    d2 = (f(h / 2) - f(-h / 2)) / h
    return (4 * d2 - d1) / 3, abs(d2 - d1)


def fd_sphere_gradient(pot: HomogeneousPotential, n, step: float = FD_STEP):
    """Finite-difference sphere gradient along great circles.

    Returns ``(gradient, error_estimate)`` where the estimate is the
    difference between the step and half-step central differences.
    """
    n = _check_unit(n)
    e1, e2 = _tangent_basis(n)
    g1, err1 = _geodesic_slope(pot, n, e1, step)
    g2, err2 = _geodesic_slope(pot, n, e2, step)
    return g1 * e1 + g2 * e2, max(err1, err2)


def sphere_gradient(pot: HomogeneousPotential, n, method: str = "auto") -> np.ndarray:
    """Tangential gradient of ``U*`` on the unit sphere, as an ambient vector.

    Vectorized over leading dimensions for analytic gradients.
    """
    n = _check_unit(n)
    if method == "auto":
        method = "analytic" if pot.gradient is not None else "fd"
    if method == "analytic":
        if pot.gradient is None:
            raise NotSupported(f"potential '{pot.kind}' has no analytic gradient")
        return pot.gradient(n)
    if method == "fd":
        if n.ndim == 1:
            return fd_sphere_gradient(pot, n)[0]
        return np.stack([fd_sphere_gradient(pot, p)[0] for p in n.reshape(-1, 3)]
                        ).reshape(n.shape)
    raise ValueError(f"unknown gradient method {method!r}")


@dataclass(frozen=True, eq=False)
class Chart:
    """Spherical polar chart ``(phi, theta)`` attached to an orthonormal frame.

    Row ``k`` of ``rotation`` is the ambient direction of chart axis ``k``;
    the polar axis is the last row.  The standard chart puts the pole on the
    signed-area axis, so collinear shapes occupy the equator.
    """

    rotation: np.ndarray
    cap: float = CHART_CAP

    @classmethod
    def standard(cls) -> "Chart":
        return cls(np.eye(3))

    @classmethod
    def first_axis(cls) -> "Chart":
        """Chart with its pole on the first Hopf component."""
        return cls(np.array([[0.0, 1.0, 0.0], [0.0, 0.0, 1.0], [1.0, 0.0, 0.0]]))

    @classmethod
    def away_from(cls, n) -> "Chart":
        """A chart whose equator passes through ``n``."""
        n = _check_unit(n)
        e1, e2 = _tangent_basis(n)
        return cls(np.stack([n, e1, e2]))

    def spherical(self, n) -> tuple[float, float]:
        c = self.rotation @ np.asarray(n, dtype=float)
        phi = math.atan2(math.hypot(c[0], c[1]), c[2])
        theta = math.atan2(c[1], c[0])
        return phi, theta

    def point(self, phi: float, theta: float) -> np.ndarray:
        c = np.array([math.sin(phi) * math.cos(theta), math.sin(phi) * math.sin(theta),
                      math.cos(phi)])
        return self.rotation.T @ c

    def basis(self, phi: float, theta: float) -> tuple[np.ndarray, np.ndarray]:
        """Ambient unit vectors along increasing ``phi`` and ``theta``."""
        e_phi = np.array([math.cos(phi) * math.cos(theta), math.cos(phi) * math.sin(theta),
                          -math.sin(phi)])
        e_theta = np.array([-math.sin(theta), math.cos(theta), 0.0])
        return self.rotation.T @ e_phi, self.rotation.T @ e_theta

    def check(self, phi: float):
        if phi < self.cap or phi > math.pi - self.cap:
            raise ChartSingularity(f"colatitude {phi:.3g} lies in a polar cap of the chart")


def ustar_gradient(pot: HomogeneousPotential, n, chart: Chart | None = None,
                   method: str = "auto", step: float = FD_STEP) -> tuple[float, float]:
    """Partial derivatives ``(dU*/dphi, dU*/dtheta)`` in a spherical chart."""
    n = _check_unit(n)
    chart = chart or Chart.standard()
    phi, theta = chart.spherical(n)
    chart.check(phi)
    if method == "auto":
        method = "analytic" if pot.gradient is not None else "fd"
    if method == "analytic":
        grad = sphere_gradient(pot, n, "analytic")
        e_phi, e_theta = chart.basis(phi, theta)
        return float(grad @ e_phi), float(math.sin(phi) * (grad @ e_theta))
    if method != "fd":
        raise ValueError(f"unknown gradient method {method!r}")

    def f(p, t):
        return float(pot.ustar(chart.point(p, t)))

    def central(h):
        return ((f(phi + h, theta) - f(phi - h, theta)) / (2 * h),
                (f(phi, theta + h) - f(phi, theta - h)) / (2 * h))

    coarse, fine = central(step), central(step / 2)
    return tuple(float((4 * b - a) / 3) for a, b in zip(coarse, fine))


def directional_derivatives(pot: HomogeneousPotential, n, tau, nu,
                            method: str = "auto") -> tuple[float, float]:
    """Derivatives of ``U*`` along unit tangent vectors ``tau`` and ``nu``."""
    n = _check_unit(n)
    for vec in (tau, nu):
        vec = np.asarray(vec, dtype=float)
        if abs(np.linalg.norm(vec) - 1.0) > 1e-8 or abs(vec @ n) > 1e-8:
            raise ValueError("frame vectors must be unit and tangent to the sphere")
    grad = sphere_gradient(pot, n, method)
    return float(grad @ tau), float(grad @ nu)
