"""Differential geometry of curves on the shape sphere.

Curves are stored as unit 3-vectors.  Derivatives with respect to arc length
come from local polynomial fits over sliding 7-point windows (quintic for the
curve, quadratic for scalar fields), or from exact time jets when a curve
carries them.  The curve's orientation flag selects the positive normal:
``nu = orientation * (n x tau)``.  Both ``nu`` and the geodesic curvature
flip with the flag, so the Siegel value ``U*_nu / K`` does not.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.interpolate import make_interp_spline

from .errors import DegenerateCurve, InsufficientSamples, SchemaError
from .potential import HomogeneousPotential, sphere_gradient

INFLECTION_GUARD = 1e-6
EXCEPTIONAL_FRACTION = 0.9
GREAT_CIRCLE_TOL = 1e-6
WINDOW = 7
SIEGEL_FIT_DEGREE = 4
_GL_X, _GL_W = leggauss(8)


def _unit_rows(points, tol: float = 1e-8) -> np.ndarray:
    p = np.array(points, dtype=float)
    if p.ndim != 2 or p.shape[1] != 3:
        raise ValueError("shape samples must be an (N, 3) array")
    r = np.linalg.norm(p, axis=1)
    if np.any(np.abs(r - 1.0) > tol):
        raise ValueError("shape samples must lie on the unit sphere")
    return p / r[:, None]


class ShapeCurve:
    """Ordered samples of an oriented curve on the unit shape sphere.

    Parameters
    ----------
    points : (N, 3) array_like
        Unit vectors; rows within 1e-8 of the sphere are renormalized.
    times : (N,) array_like, optional
        Strictly increasing sample times.
    velocities, accelerations : (N, 3) array_like, optional
        Exact time derivatives of the samples.  Both require ``times``.
    orientation : {+1, -1}
        Sign convention for the positive normal.
    """

    def __init__(self, points, times=None, velocities=None, accelerations=None,
                 orientation: int = 1):
        self.points = _unit_rows(points)
        self.points.flags.writeable = False
        if orientation not in (1, -1):
            raise ValueError("orientation must be +1 or -1")
        self.orientation = int(orientation)
        n = len(self.points)
        self.times = None if times is None else np.asarray(times, dtype=float)
        if self.times is not None:
            if self.times.shape != (n,):
                raise ValueError("times must match the number of samples")
            if np.any(np.diff(self.times) <= 0):
                raise ValueError("times must be strictly increasing")
        if (velocities is not None or accelerations is not None) and self.times is None:
            raise ValueError("derivatives need a time table")
        self.velocities = None if velocities is None else np.asarray(velocities, dtype=float)
        self.accelerations = (None if accelerations is None
                              else np.asarray(accelerations, dtype=float))
        self._arclength = None
        self._fit = None

    def __len__(self):
        return len(self.points)

    @property
    def has_times(self) -> bool:
        return self.times is not None

    @property
    def has_jets(self) -> bool:
        return self.velocities is not None and self.accelerations is not None

    def is_degenerate(self, tol: float = 1e-10) -> bool:
        """True when the samples do not leave a ``tol`` neighborhood of the first one."""
        return float(np.max(np.linalg.norm(self.points - self.points[0], axis=1))) < tol

    def reversed(self) -> "ShapeCurve":
        """Same geometric curve traversed backwards, with times mirrored."""
        t = None if self.times is None else (self.times[-1] - self.times)[::-1]
        vel = None if self.velocities is None else -self.velocities[::-1]
        acc = None if self.accelerations is None else self.accelerations[::-1]
        return ShapeCurve(self.points[::-1], t, vel, acc, self.orientation)

    def with_orientation(self, orientation: int) -> "ShapeCurve":
        return ShapeCurve(self.points, self.times, self.velocities, self.accelerations,
                          orientation)

    def strip_times(self) -> "ShapeCurve":
        """Keep only the geometric curve."""
        return ShapeCurve(self.points, orientation=self.orientation)

    # -- arc length ---------------------------------------------------------

    def fitted(self) -> "_SphericalSpline":
        if self._fit is None:
            self._fit = _SphericalSpline(self.points)
        return self._fit

    @property
    def arclength(self) -> np.ndarray:
        """Cumulative arc length ``s_k`` with ``s_0 = 0``."""
        if self._arclength is None:
            if self.has_jets:
                s = _hermite_arclength(self.times, self.velocities, self.accelerations)
            else:
                s = self.fitted().sample_arclength()
            if np.any(np.diff(s) <= 0):
                raise DegenerateCurve("consecutive samples coincide")
            self._arclength = s
        return self._arclength

    @property
    def length(self) -> float:
        return float(self.arclength[-1])

    # -- serialization ------------------------------------------------------

    def to_csv(self, path=None) -> str:
        """Write ``s, nx, ny, nz`` rows after an orientation header line."""
        buf = io.StringIO()
        buf.write(f"# orientation={self.orientation:+d}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "nx", "ny", "nz"])
        s = self.arclength
        for sk, p in zip(s, self.points):
            w.writerow([f"{sk:.17g}"] + [f"{x:.17g}" for x in p])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text)
        return text

    @classmethod
    def from_csv(cls, source) -> "ShapeCurve":
        """Read a curve file; accepts ``s, nx, ny, nz`` or ``t, phi, theta`` columns."""
        text = Path(source).read_text() if not isinstance(source, str) or "\n" not in source \
            else source
        orientation = 1
        body = []
        for line in text.splitlines():
            if line.startswith("#"):
                key, _, value = line[1:].strip().partition("=")
                if key.strip() == "orientation":
                    orientation = int(value)
            elif line.strip():
                body.append(line)
        if not body:
            raise SchemaError("curve file has no header row")
        rows = list(csv.DictReader(body))
        cols = set(rows[0]) if rows else set(body[0].split(","))
        try:
            if {"nx", "ny", "nz"} <= cols:
                pts = np.array([[float(r["nx"]), float(r["ny"]), float(r["nz"])] for r in rows])
                return cls(pts, orientation=orientation)
            if {"t", "phi", "theta"} <= cols:
                t = np.array([float(r["t"]) for r in rows])
                ph = np.array([float(r["phi"]) for r in rows])
                th = np.array([float(r["theta"]) for r in rows])
                pts = np.stack([np.sin(ph) * np.cos(th), np.sin(ph) * np.sin(th), np.cos(ph)], 1)
                return cls(pts, t, orientation=orientation)
        except (KeyError, ValueError) as exc:
            raise SchemaError(f"malformed curve row: {exc}") from exc
        raise SchemaError(f"curve file needs columns s,nx,ny,nz or t,phi,theta; got {sorted(cols)}")


def _hermite_arclength(t, ndot, nddot) -> np.ndarray:
    v = np.linalg.norm(ndot, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        vdot = np.where(v > 0, np.sum(ndot * nddot, axis=1) / v, 0.0)
    dt = np.diff(t)
    ds = 0.5 * dt * (v[1:] + v[:-1]) + dt ** 2 / 12.0 * (vdot[:-1] - vdot[1:])
    return np.concatenate([[0.0], np.cumsum(ds)])


class _SphericalSpline:
    """Quintic interpolating spline through the samples, radially projected.

    The spline parameter is the cumulative chord angle; arc length of the
    normalized curve is integrated by 8-point Gauss-Legendre per interval.
    """

    def __init__(self, points):
        steps = np.linalg.norm(np.diff(points, axis=0), axis=1)
        if len(points) < 2 or np.any(steps == 0):
            raise DegenerateCurve("curve needs at least two distinct consecutive samples")
        self.u = np.concatenate([[0.0], np.cumsum(2.0 * np.arcsin(np.clip(steps / 2, 0, 1)))])
        k = 5 if len(points) >= 6 else (3 if len(points) >= 4 else 1)
        self.spline = make_interp_spline(self.u, points, k=k)
        self.dspline = self.spline.derivative()
        self._s = None

    def point(self, u):
        p = self.spline(u)
        return p / np.linalg.norm(p, axis=-1, keepdims=True)

    def speed(self, u):
        p, dp = self.spline(u), self.dspline(u)
        r = np.linalg.norm(p, axis=-1, keepdims=True)
        ph = p / r
        tang = dp - np.sum(ph * dp, axis=-1, keepdims=True) * ph
        return np.linalg.norm(tang, axis=-1) / r[..., 0]

    def _segment(self, a, b):
        half = 0.5 * (b - a)
        mid = 0.5 * (b + a)
        nodes = mid[:, None] + half[:, None] * _GL_X[None, :]
        return half * (self.speed(nodes) @ _GL_W)

    def sample_arclength(self) -> np.ndarray:
        if self._s is None:
            self._s = np.concatenate([[0.0], np.cumsum(self._segment(self.u[:-1], self.u[1:]))])
        return self._s

    def parameter_at(self, s_target) -> np.ndarray:
        """Invert arc length by Newton iteration inside each sample interval."""
        s_tab = self.sample_arclength()
        s_target = np.clip(np.asarray(s_target, dtype=float), 0.0, s_tab[-1])
        idx = np.clip(np.searchsorted(s_tab, s_target, side="right") - 1, 0, len(self.u) - 2)
        ua, ub = self.u[idx], self.u[idx + 1]
        sa = s_tab[idx]
        frac = (s_target - sa) / (s_tab[idx + 1] - sa)
        u = ua + frac * (ub - ua)
        for _ in range(30):
            resid = sa + self._segment(ua, u) - s_target
            step = resid / self.speed(u)
            u = np.clip(u - step, ua, ub)
            if np.max(np.abs(step)) < 1e-15 * max(1.0, self.u[-1]):
                break
        return u


def resample_by_arclength(curve: ShapeCurve, m: int) -> ShapeCurve:
    """Resample ``curve`` at ``m`` points uniformly spaced in arc length.

    The time table is dropped on purpose: the returned curve is purely
    geometric.
    """
    if m < 4:
        raise ValueError("resampling needs at least 4 points")
    if curve.is_degenerate():
        raise DegenerateCurve("curve is a single point")
    fit = curve.fitted()
    s = np.linspace(0.0, fit.sample_arclength()[-1], m)
    pts = fit.point(fit.parameter_at(s))
    out = ShapeCurve(pts, orientation=curve.orientation)
    out._arclength = s
    return out


# ---------------------------------------------------------------------------
# Local polynomial fits


def _windows(count: int, width: int = WINDOW) -> np.ndarray:
    if count < width:
        raise InsufficientSamples(f"need at least {width} samples, got {count}")
    start = np.clip(np.arange(count) - width // 2, 0, count - width)
    return start[:, None] + np.arange(width)[None, :]


def _design(x, win, deg):
    """Scaled Vandermonde pseudo-inverses for each window, centered at its sample."""
    dx = x[win] - x[:, None]
    scale = np.max(np.abs(dx), axis=1, keepdims=True)
    vand = (dx / scale)[..., None] ** np.arange(deg + 1)
    return dx, scale, vand


def local_derivatives(x, values, deg: int = 5, order: int = 2,
                      width: int = WINDOW) -> list[np.ndarray]:
    """Derivatives ``d^j values / dx^j`` for j = 0..order at every sample.

    ``values`` has shape ``(N,)`` or ``(N, d)``; each sample uses the least
    squares polynomial of degree ``deg`` over its window.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(values, dtype=float)
    squeeze = y.ndim == 1
    if squeeze:
        y = y[:, None]
    win = _windows(len(x), width)
    _, scale, vand = _design(x, win, deg)
    coef = np.linalg.pinv(vand) @ y[win]
    out = []
    for j in range(order + 1):
        d = coef[:, j, :] * math.factorial(j) / scale ** j
        out.append(d[:, 0] if squeeze else d)
    return out


def _product_fit_derivative(x, weight, target, deg: int = 2, width: int = WINDOW):
    """Fit ``weight * p(x) ~ target`` per window and return ``p(x_k), p'(x_k)``."""
    win = _windows(len(x), width)
    _, scale, vand = _design(x, win, deg)
    a = weight[win][..., None] * vand
    coef = np.einsum("kij,kj->ki", np.linalg.pinv(a), target[win])
    return coef[:, 0], coef[:, 1] / scale[:, 0]


# ---------------------------------------------------------------------------
# Intrinsic data


@dataclass(frozen=True)
class IntrinsicData:
    s: float
    n: np.ndarray
    tau: np.ndarray
    nu: np.ndarray
    curvature: float
    ustar: float
    u_tau: float
    u_nu: float
    siegel: float
    siegel_prime: float
    near_inflection: bool
    v: float | None = None
    vdot: float | None = None
    curvature_prime: float | None = None
    u_nu_prime: float | None = None


@dataclass(eq=False)
class IntrinsicTable:
    """Vectorized intrinsic quantities along a curve, indexed like its samples."""

    s: np.ndarray
    n: np.ndarray
    tau: np.ndarray
    nu: np.ndarray
    curvature: np.ndarray
    ustar: np.ndarray
    u_tau: np.ndarray
    u_nu: np.ndarray
    siegel: np.ndarray
    siegel_prime: np.ndarray
    near_inflection: np.ndarray
    curvature_prime: np.ndarray
    u_nu_prime: np.ndarray
    v: np.ndarray | None = None
    vdot: np.ndarray | None = None
    extras: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.s)

    def __getitem__(self, k: int) -> IntrinsicData:
        return IntrinsicData(
            float(self.s[k]), self.n[k], self.tau[k], self.nu[k], float(self.curvature[k]),
            float(self.ustar[k]), float(self.u_tau[k]), float(self.u_nu[k]),
            float(self.siegel[k]), float(self.siegel_prime[k]), bool(self.near_inflection[k]),
            None if self.v is None else float(self.v[k]),
            None if self.vdot is None else float(self.vdot[k]),
            float(self.curvature_prime[k]), float(self.u_nu_prime[k]),
        )


def _curve_jets(curve: ShapeCurve):
    """Unit tangent, curvature, and (if timed) speed and its rate at every sample."""
    n = curve.points
    if curve.has_jets:
        nd, ndd = curve.velocities, curve.accelerations
        v = np.linalg.norm(nd, axis=1)
        if np.any(v == 0):
            raise DegenerateCurve("shape velocity vanishes on the curve")
        tau = nd / v[:, None]
        kappa = np.einsum("ij,ij->i", n, np.cross(nd, ndd)) / v ** 3
        vdot = np.einsum("ij,ij->i", nd, ndd) / v
        return tau, kappa, v, vdot
    s = curve.arclength
    _, d1, d2 = local_derivatives(s, n, deg=5, order=2)
    d1 = d1 - np.einsum("ij,ij->i", d1, n)[:, None] * n
    speed = np.linalg.norm(d1, axis=1)
    tau = d1 / speed[:, None]
    kappa = np.einsum("ij,ij->i", n, np.cross(d1, d2)) / speed ** 3
    v = vdot = None
    if curve.has_times:
        ds = local_derivatives(curve.times, s, deg=5, order=2)
        v, vdot = ds[1], ds[2]
    return tau, kappa, v, vdot


def intrinsic_table(curve: ShapeCurve, pot: HomogeneousPotential,
                    guard: float = INFLECTION_GUARD) -> IntrinsicTable:
    """Frame, curvature, potential derivatives and Siegel values along ``curve``.

    Samples with ``|K| < guard`` are flagged and get NaN Siegel values.  The
    Siegel derivative is obtained from the quartic product fit ``K p(s) ~ U*_nu``,
    which stays well conditioned next to flagged samples.  ``K'`` and
    ``U*_nu'`` come from local quadratic fits in ``s``.
    """
    n = curve.points
    s = curve.arclength
    tau, kappa, v, vdot = _curve_jets(curve)
    sign = curve.orientation
    nu = sign * np.cross(n, tau)
    kappa = sign * kappa
    grad = sphere_gradient(pot, n)
    u = pot.ustar(n)
    u_tau = np.einsum("ij,ij->i", grad, tau)
    u_nu = np.einsum("ij,ij->i", grad, nu)
    flagged = np.abs(kappa) < guard
    with np.errstate(divide="ignore", invalid="ignore"):
        sieg = np.where(flagged, np.nan, u_nu / kappa)
    _, sprime = _product_fit_derivative(s, kappa, u_nu, deg=SIEGEL_FIT_DEGREE)
    sprime = np.where(flagged, np.nan, sprime)
    kprime = local_derivatives(s, kappa, deg=2, order=1)[1]
    unprime = local_derivatives(s, u_nu, deg=2, order=1)[1]
    return IntrinsicTable(s, n, tau, nu, kappa, np.asarray(u, dtype=float), u_tau, u_nu,
                          sieg, sprime, flagged, kprime, unprime, v, vdot)


def frame_and_speed(curve: ShapeCurve, k: int):
    """Return ``(tau, nu, v)`` at sample ``k``; ``v`` is None for untimed curves."""
    if len(curve) < WINDOW and not curve.has_jets:
        raise InsufficientSamples(f"need at least {WINDOW} samples")
    tau, _, v, _ = _curve_jets(curve)
    n = curve.points[k]
    nu = curve.orientation * np.cross(n, tau[k])
    return tau[k], nu, (None if v is None else float(v[k]))


def geodesic_curvature(curve: ShapeCurve, k: int | None = None):
    """Signed geodesic curvature at sample ``k`` (or the whole array)."""
    _, kappa, _, _ = _curve_jets(curve)
    kappa = curve.orientation * kappa
    return kappa if k is None else float(kappa[k])


def siegel(curve: ShapeCurve, k: int, pot: HomogeneousPotential):
    """``(S, S', near_inflection)`` at sample ``k``; values are NaN when flagged."""
    tab = intrinsic_table(curve, pot)
    return float(tab.siegel[k]), float(tab.siegel_prime[k]), bool(tab.near_inflection[k])


def great_circle_residual(points) -> float:
    """Largest distance of the samples from their best-fit great circle plane."""
    p = np.asarray(points, dtype=float)
    _, _, vt = np.linalg.svd(p, full_matrices=False)
    return float(np.max(np.abs(p @ vt[-1])))


def is_exceptional(curve: ShapeCurve, table: IntrinsicTable | None = None,
                   pot: HomogeneousPotential | None = None) -> bool:
    """Geodesic-arc test: nearly all samples flagged and the curve on a great circle."""
    if curve.is_degenerate():
        return True
    if table is None:
        if pot is None:
            raise ValueError("need either an intrinsic table or a potential")
        table = intrinsic_table(curve, pot)
    frac = float(np.mean(table.near_inflection))
    return frac >= EXCEPTIONAL_FRACTION and great_circle_residual(curve.points) < GREAT_CIRCLE_TOL


def sample_latitude_circle(phi: float, count: int, span: float = 2 * math.pi) -> ShapeCurve:
    """Circle of constant colatitude ``phi`` with uniform longitude spacing."""
    th = np.linspace(0.0, span, count)
    pts = np.stack([math.sin(phi) * np.cos(th), math.sin(phi) * np.sin(th),
                    np.full_like(th, math.cos(phi))], axis=1)
    return ShapeCurve(pts)
