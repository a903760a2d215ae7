"""Independent reference implementations used as test oracles.

Nothing here imports the code under test except plain data containers, so
each check compares two separate routes to the same quantity.
"""

from __future__ import annotations

import math

import numpy as np


def jacobi_direct(masses, positions):
    """Complex Jacobi vectors from the textbook formulas, body by body."""
    m1, m2, m3 = (float(m) for m in masses)
    a = [complex(p[0], p[1]) for p in np.asarray(positions, dtype=float)]
    mu1 = m1 * m2 / (m1 + m2)
    mu2 = m3 * (m1 + m2) / (m1 + m2 + m3)
    c12 = (m1 * a[0] + m2 * a[1]) / (m1 + m2)
    return math.sqrt(mu1) * (a[1] - a[0]), math.sqrt(mu2) * (a[2] - c12)


def shape_direct(masses, positions):
    """``(rho, n)`` computed without the package's Hopf helpers."""
    z1, z2 = jacobi_direct(masses, positions)
    p = z1.conjugate() * z2
    w = np.array([abs(z1) ** 2 - abs(z2) ** 2, 2 * p.real, 2 * p.imag])
    r = float(np.linalg.norm(w))
    return math.sqrt(r), w / r


def triangle_from_shape(masses, n, rho: float = 1.0):
    """A centered triangle with shape ``n`` and hyperradius ``rho``."""
    m1, m2, m3 = (float(m) for m in masses)
    n = np.asarray(n, dtype=float)
    z1 = math.sqrt((1.0 + n[0]) / 2.0)
    if z1 < 1e-12:
        z1, z2 = 0.0, 1.0 + 0j
    else:
        z2 = complex(n[1], n[2]) / (2.0 * z1)
    z1 *= rho
    z2 *= rho
    mu1 = m1 * m2 / (m1 + m2)
    mu2 = m3 * (m1 + m2) / (m1 + m2 + m3)
    d12 = z1 / math.sqrt(mu1)
    d3 = z2 / math.sqrt(mu2)
    # a2 - a1 = d12, a3 - c12 = d3, sum m a = 0
    a1 = -m2 / (m1 + m2) * d12 - m3 * d3 / (m1 + m2 + m3)
    a2 = a1 + d12
    a3 = (m1 * a1 + m2 * a2) / (m1 + m2) + d3
    return np.array([[c.real, c.imag] for c in (a1, a2, a3)])


def pair_sum_direct(masses, positions, power: float = 1.0) -> float:
    a = np.asarray(positions, dtype=float)
    total = 0.0
    for i in range(3):
        for j in range(i + 1, 3):
            total += masses[i] * masses[j] / math.dist(a[i], a[j]) ** power
    return total


def ustar_by_lift(masses, n, power: float = 1.0) -> float:
    """Shape potential: the potential of the unit-hyperradius representative."""
    return pair_sum_direct(masses, triangle_from_shape(masses, n), power)


def fd_acceleration(masses, positions, power: float = 1.0, h: float = 1e-5):
    """``(1/m_i) dU/da_i`` by central differences of the pair sum."""
    a = np.asarray(positions, dtype=float)
    out = np.zeros_like(a)
    for i in range(3):
        for k in range(2):
            ap, am = a.copy(), a.copy()
            ap[i, k] += h
            am[i, k] -= h
            out[i, k] = (pair_sum_direct(masses, ap, power)
                         - pair_sum_direct(masses, am, power)) / (2 * h) / masses[i]
    return out


def fd_sphere_gradient_secant(masses, n, power: float = 1.0, h: float = 1e-5):
    """Tangential gradient of ``U*`` from secants along two great circles."""
    n = np.asarray(n, dtype=float)
    helper = np.array([1.0, 0.0, 0.0]) if abs(n[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = np.cross(n, helper)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(n, e1)
    grad = np.zeros(3)
    for e in (e1, e2):
        fp = ustar_by_lift(masses, math.cos(h) * n + math.sin(h) * e, power)
        fm = ustar_by_lift(masses, math.cos(h) * n - math.sin(h) * e, power)
        grad += (fp - fm) / (2 * h) * e
    return grad


def circular_lagrange(t, side: float = 1.0):
    """Equal-mass equilateral triangle rotating rigidly at rate ``w``."""
    r0 = side / math.sqrt(3.0)
    w = math.sqrt(1.0 / side ** 3)
    angles = np.array([0.0, 2 * math.pi / 3, 4 * math.pi / 3])
    t = np.atleast_1d(np.asarray(t, dtype=float))
    ang = angles[None, :] + w * t[:, None]
    pos = r0 * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
    vel = r0 * w * np.stack([-np.sin(ang), np.cos(ang)], axis=-1)
    return pos, vel, w


def chart_speed(phi, theta, dphi, dtheta):
    """Shape speed from the spherical chart metric."""
    return np.sqrt(dphi ** 2 + np.sin(phi) ** 2 * dtheta ** 2)


def chart_curvature(phi, dphi, dtheta, ddphi, ddtheta):
    """Signed geodesic curvature of ``(phi(t), theta(t))`` on the unit sphere.

    Computed from the ambient formula ``n . (n' x n'') / |n'|^3`` with
    the chart expansions written out by hand.
    """
    s, c = math.sin(phi), math.cos(phi)
    v2 = dphi ** 2 + s * s * dtheta ** 2
    num = (s * (dphi * ddtheta - dtheta * ddphi) + c * dtheta * (2 * dphi ** 2 + s * s * dtheta ** 2))
    return num / v2 ** 1.5


def procrustes_residual(pa, pb, masses) -> float:
    """Max-in-time mass-weighted distance after the best rotation, by brute-force search."""
    m = np.asarray(masses, dtype=float)
    za = pa[..., 0] + 1j * pa[..., 1]
    zb = pb[..., 0] + 1j * pb[..., 1]
    best = math.inf
    for ang in np.linspace(-math.pi, math.pi, 20001):
        d = za - np.exp(1j * ang) * zb
        best = min(best, float(np.max(np.sqrt(np.sum(m * np.abs(d) ** 2, axis=-1)))))
    return best
