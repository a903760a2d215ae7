"""m-triangles, mass-weighted Jacobi vectors and the Hopf map.

A planar m-triangle is encoded by two complex Jacobi vectors ``z = (z1, z2)``
so that the kinematic (mass-weighted) metric becomes the Euclidean metric on
C^2 = R^4.  Rotating the triangle by an angle ``a`` multiplies both Jacobi
vectors by ``exp(i a)``, and the rotation-invariant Hopf vector

    w = (|z1|^2 - |z2|^2, 2 Re(conj(z1) z2), 2 Im(conj(z1) z2))

satisfies ``|w| = |z|^2 = I``.  The moduli point is ``(rho, n)`` with
``rho = sqrt(|w|)`` and ``n = w / |w|`` on the unit shape sphere.  The third
component of ``n`` is proportional to the signed area, so collinear shapes
form the equator ``n[2] == 0``.

Array helpers accept arbitrary leading dimensions: positions ``(..., 3, 2)``,
Jacobi vectors ``(..., 2)`` complex, Hopf vectors ``(..., 3)``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import InvalidMasses, MissingVelocities, SchemaError, UndefinedShape

MASS_RESCALE_WARN = 1e-9


def normalize_masses(masses) -> np.ndarray:
    m = np.asarray(masses, dtype=float).reshape(-1)
    if m.shape != (3,):
        raise InvalidMasses(f"expected three masses, got {m.shape[0]}")
    if not np.all(np.isfinite(m)) or np.any(m <= 0.0):
        raise InvalidMasses(f"masses must be positive and finite, got {m.tolist()}")
    total = m.sum()
    if abs(total - 1.0) > MASS_RESCALE_WARN:
        warnings.warn(f"masses rescaled by 1/{total:.12g} to sum to one", stacklevel=3)
    return m / total


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MTriangle:
    """Three planar point masses in the center-of-mass frame.

    Construction normalizes the masses to unit total and subtracts the
    center of mass (and the center-of-mass velocity, if velocities are
    given), so every instance lies in the configuration space.
    """

    masses: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray | None = None

    def __post_init__(self):
        m = normalize_masses(self.masses)
        pos = np.asarray(self.positions, dtype=float).reshape(3, 2)
        pos = pos - m @ pos
        object.__setattr__(self, "masses", _frozen(m))
        object.__setattr__(self, "positions", _frozen(pos))
        if self.velocities is not None:
            vel = np.asarray(self.velocities, dtype=float).reshape(3, 2)
            vel = vel - m @ vel
            object.__setattr__(self, "velocities", _frozen(vel))

    @property
    def has_velocities(self) -> bool:
        return self.velocities is not None

    def side_lengths(self) -> np.ndarray:
        """Return ``(r12, r13, r23)``."""
        a = self.positions
        return np.array([np.linalg.norm(a[0] - a[1]), np.linalg.norm(a[0] - a[2]),
                         np.linalg.norm(a[1] - a[2])])

    def signed_area(self) -> float:
        a = self.positions
        d1, d2 = a[1] - a[0], a[2] - a[0]
        return 0.5 * float(d1[0] * d2[1] - d1[1] * d2[0])

    def rotated(self, angle: float) -> "MTriangle":
        c, s = math.cos(angle), math.sin(angle)
        rot = np.array([[c, -s], [s, c]])
        vel = None if self.velocities is None else self.velocities @ rot.T
        return MTriangle(self.masses, self.positions @ rot.T, vel)

    def scaled(self, factor: float) -> "MTriangle":
        vel = None if self.velocities is None else self.velocities * factor
        return MTriangle(self.masses, self.positions * factor, vel)

    def to_json(self) -> dict:
        out = {"masses": self.masses.tolist(), "positions": self.positions.tolist()}
        if self.velocities is not None:
            out["velocities"] = self.velocities.tolist()
        return out

    @classmethod
    def from_json(cls, obj) -> "MTriangle":
        try:
            masses = obj["masses"]
            positions = obj["positions"]
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"triangle literal needs 'masses' and 'positions': {exc}") from None
        velocities = obj.get("velocities")
        try:
            return cls(masses, positions, velocities)
        except ValueError as exc:
            if isinstance(exc, InvalidMasses):
                raise
            raise SchemaError(f"malformed triangle literal: {exc}") from None


def kinematic_quantities(tri: MTriangle) -> tuple[float, float, float]:
    """Moment of inertia, kinetic energy and (scalar) angular momentum."""
    m, a = tri.masses, tri.positions
    inertia = float(m @ np.sum(a * a, axis=1))
    if tri.velocities is None:
        raise MissingVelocities("kinetic energy and angular momentum need velocities")
    v = tri.velocities
    kinetic = 0.5 * float(m @ np.sum(v * v, axis=1))
    omega = float(m @ (a[:, 0] * v[:, 1] - a[:, 1] * v[:, 0]))
    return inertia, kinetic, omega


# ---------------------------------------------------------------------------
# Jacobi vectors (array level)


def jacobi_weights(masses) -> tuple[float, float]:
    """Return ``(sqrt(mu1), sqrt(mu2))`` for unit total mass."""
    m1, m2, m3 = masses
    mu1 = m1 * m2 / (m1 + m2)
    mu2 = m3 * (m1 + m2)
    return math.sqrt(mu1), math.sqrt(mu2)


def _as_complex(pos: np.ndarray) -> np.ndarray:
    return pos[..., 0] + 1j * pos[..., 1]


def positions_to_jacobi(masses, positions) -> np.ndarray:
    """Map positions ``(..., 3, 2)`` (or any vectors in M) to complex ``(..., 2)``.

    The map is linear and translation invariant, so it applies equally to
    velocities and accelerations.
    """
    m1, m2, _ = masses
    q1, q2 = jacobi_weights(masses)
    a = _as_complex(np.asarray(positions, dtype=float))
    c12 = (m1 * a[..., 0] + m2 * a[..., 1]) / (m1 + m2)
    return np.stack([q1 * (a[..., 1] - a[..., 0]), q2 * (a[..., 2] - c12)], axis=-1)


def jacobi_to_positions(masses, z) -> np.ndarray:
    """Inverse of :func:`positions_to_jacobi` onto the center-of-mass frame."""
    m1, m2, m3 = masses
    q1, q2 = jacobi_weights(masses)
    z = np.asarray(z, dtype=complex)
    d1 = z[..., 0] / q1
    d2 = z[..., 1] / q2
    c12 = -m3 * d2
    a = np.stack([c12 - m2 / (m1 + m2) * d1, c12 + m1 / (m1 + m2) * d1,
                  (m1 + m2) * d2], axis=-1)
    return np.stack([a.real, a.imag], axis=-1)


# ---------------------------------------------------------------------------
# Hopf map (array level)


def hopf(z) -> np.ndarray:
    z = np.asarray(z, dtype=complex)
    z1, z2 = z[..., 0], z[..., 1]
    c = 2.0 * np.conj(z1) * z2
    return np.stack([np.abs(z1) ** 2 - np.abs(z2) ** 2, c.real, c.imag], axis=-1)


def hopf_bilinear(z, y) -> np.ndarray:
    """Symmetric bilinear form B with ``B(z, z) = hopf(z)``."""
    z1, z2 = z[..., 0], z[..., 1]
    y1, y2 = y[..., 0], y[..., 1]
    c = np.conj(z1) * y2 + np.conj(y1) * z2
    first = (np.conj(z1) * y1).real - (np.conj(z2) * y2).real
    return np.stack([first, c.real, c.imag], axis=-1)


def hopf_gradients(z) -> np.ndarray:
    """Euclidean gradients of the three Hopf components at ``z``.

    Returns complex ``(..., 3, 2)``; the real inner product of row ``i`` with
    a tangent vector ``dz`` gives ``dw_i``.  The rows are mutually orthogonal,
    each of squared norm ``4 |z|^2``, and orthogonal to the rotation
    direction ``i z``.
    """
    z = np.asarray(z, dtype=complex)
    z1, z2 = z[..., 0], z[..., 1]
    g1 = np.stack([2 * z1, -2 * z2], axis=-1)
    g2 = np.stack([2 * z2, 2 * z1], axis=-1)
    g3 = np.stack([-2j * z2, 2j * z1], axis=-1)
    return np.stack([g1, g2, g3], axis=-2)


def real_dot(a, b) -> np.ndarray:
    """Real inner product of complex vectors along the last axis."""
    return np.sum((np.conj(a) * b).real, axis=-1)


def hopf_jets(z, zdot, zddot):
    """Return ``(w, wdot, wddot)`` along a curve with given Jacobi jets."""
    w = hopf(z)
    wdot = 2.0 * hopf_bilinear(z, zdot)
    wddot = 2.0 * hopf(zdot) + 2.0 * hopf_bilinear(z, zddot)
    return w, wdot, wddot


def radial_jets(w, wdot, wddot):
    """Split Hopf-vector jets into hyperradius and unit-sphere jets.

    Returns ``(rho, rhodot, rhoddot, n, ndot, nddot)``.
    """
    r = np.linalg.norm(w, axis=-1)
    n = w / r[..., None]
    rdot = np.sum(n * wdot, axis=-1)
    ndot = (wdot - rdot[..., None] * n) / r[..., None]
    rddot = np.sum(ndot * wdot, axis=-1) + np.sum(n * wddot, axis=-1)
    nddot = (wddot - rddot[..., None] * n - 2.0 * rdot[..., None] * ndot) / r[..., None]
    rho = np.sqrt(r)
    rhodot = rdot / (2.0 * rho)
    rhoddot = rddot / (2.0 * rho) - rdot ** 2 / (4.0 * rho ** 3)
    return rho, rhodot, rhoddot, n, ndot, nddot


def section_lift(n) -> np.ndarray:
    """Unit Jacobi vectors with ``hopf(z) == n`` and ``z1`` real and >= 0.

    Regular everywhere except ``n[0] == -1`` (bodies 1 and 2 coincide).
    In the chart with polar axis along the first Hopf component this is
    ``z = (cos(a/2), sin(a/2) exp(i b))``.
    """
    n = np.asarray(n, dtype=float)
    z1 = np.sqrt(np.clip(0.5 * (1.0 + n[..., 0]), 0.0, None))
    with np.errstate(divide="ignore", invalid="ignore"):
        z2 = (n[..., 1] + 1j * n[..., 2]) / (2.0 * z1)
    return np.stack([z1 + 0j, z2], axis=-1)


def unit_lift(n) -> np.ndarray:
    """A smooth-enough unit lift of ``n`` valid on the whole sphere.

    Uses :func:`section_lift` for ``n[0] >= 0`` and the section with real
    ``z2`` otherwise.  The rotation phase is arbitrary, which is harmless for
    rotation-invariant evaluations.
    """
    n = np.asarray(n, dtype=float)
    z = section_lift(n)
    other = n[..., 0] < 0.0
    if np.any(other):
        nb = n[other] if n.ndim > 1 else n
        z2 = np.sqrt(0.5 * (1.0 - nb[..., 0]))
        z1 = (nb[..., 1] - 1j * nb[..., 2]) / (2.0 * z2)
        zb = np.stack([z1, z2 + 0j], axis=-1)
        if n.ndim > 1:
            z[other] = zb
        else:
            z = zb
    return z


# ---------------------------------------------------------------------------
# Typed wrappers


@dataclass(frozen=True, eq=False)
class JacobiPair:
    """Mass-weighted Jacobi vectors of an m-triangle (complex ``z``)."""

    z: np.ndarray
    masses: np.ndarray
    zdot: np.ndarray | None = None

    @property
    def z1(self) -> complex:
        return complex(self.z[0])

    @property
    def z2(self) -> complex:
        return complex(self.z[1])

    @property
    def norm2(self) -> float:
        return float(np.sum(np.abs(self.z) ** 2))


def to_jacobi(tri: MTriangle) -> JacobiPair:
    z = positions_to_jacobi(tri.masses, tri.positions)
    zdot = None
    if tri.velocities is not None:
        zdot = positions_to_jacobi(tri.masses, tri.velocities)
    return JacobiPair(z, tri.masses, zdot)


def from_jacobi(jp: JacobiPair) -> MTriangle:
    masses = normalize_masses(jp.masses)
    pos = jacobi_to_positions(masses, jp.z)
    vel = None if jp.zdot is None else jacobi_to_positions(masses, jp.zdot)
    return MTriangle(masses, pos, vel)


@dataclass(frozen=True, eq=False)
class ModuliPoint:
    """Congruence class ``(rho, n)``; ``n`` is ``None`` at the cone vertex."""

    rho: float
    n: np.ndarray | None

    @property
    def defined(self) -> bool:
        return self.n is not None

    def _require(self) -> np.ndarray:
        if self.n is None:
            raise UndefinedShape("shape of the triple collision is undefined")
        return self.n

    @property
    def phi(self) -> float:
        """Colatitude measured from the signed-area axis."""
        n = self._require()
        return math.atan2(math.hypot(n[0], n[1]), n[2])

    @property
    def theta(self) -> float:
        n = self._require()
        return math.atan2(n[1], n[0]) % (2.0 * math.pi)

    @classmethod
    def from_spherical(cls, rho: float, phi: float, theta: float) -> "ModuliPoint":
        n = np.array([math.sin(phi) * math.cos(theta), math.sin(phi) * math.sin(theta),
                      math.cos(phi)])
        return cls(float(rho), _frozen(n))


def hopf_project(jp: JacobiPair | MTriangle) -> ModuliPoint:
    """Project a triangle (or its Jacobi pair) onto the moduli cone."""
    if isinstance(jp, MTriangle):
        jp = to_jacobi(jp)
    w = hopf(jp.z)
    r = float(np.linalg.norm(w))
    if r == 0.0:
        return ModuliPoint(0.0, None)
    return ModuliPoint(math.sqrt(r), _frozen(w / r))


def sphere_angle(a, b) -> np.ndarray:
    """Great-circle angle between unit vectors (stable for small angles)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    return np.arctan2(cross, np.sum(a * b, axis=-1))


def shape_distance(p: ModuliPoint, q: ModuliPoint) -> float:
    """Orbital distance on the shape space, a round sphere of radius 1/2."""
    if not (p.defined and q.defined) or p.rho <= 0.0 or q.rho <= 0.0:
        raise UndefinedShape("shape distance needs two nonzero triangles")
    return 0.5 * float(sphere_angle(p.n, q.n))
