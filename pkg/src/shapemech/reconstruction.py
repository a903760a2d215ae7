"""Recover a motion from its geometric shape curve and energy-momentum level.

Along the curve the intrinsic data (frame, geodesic curvature ``K``, the
directional derivatives of ``U*`` and their arc-length derivatives) turn the
reduced equations into pointwise relations for the size ``rho``, the shape
speed ``v`` and the radial rate ``rhodot``.  The time table then follows
from ``dt = ds / v`` and the rotation phase from the angular momentum.  The
result is determined up to congruence and time translation (``t = 0`` at
the first sample).

Two models are offered.  ``"full"`` keeps the gyroscopic term
``-(2 Omega / rho^2) n x n'`` of the reduced shape equation: the normal
relation becomes quadratic in ``v``, and ``rho`` is a root of a scalar
equation found by bracketing, with the root curve selected by consistency
along the curve.  ``"no-gyro"`` drops that term, which gives closed forms
(the Siegel value ``U*_nu / K`` and a quadratic for ``rho``) that are exact
only for zero angular momentum.

For ``e = 2`` the radial-rate relation is void, so the curve and level
leave a one-parameter family of motions; :func:`reconstruct_motion` then
needs the radial rate at the first sample.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson, cumulative_trapezoid, solve_ivp
from scipy.interpolate import make_interp_spline
from scipy.optimize import minimize_scalar

from .errors import (
    BinaryCollision,
    ConeVertex,
    DegenerateCurve,
    ExceptionalShape,
    GapTooLong,
    GridMismatch,
    Inadmissible,
    NotIdentifiable,
    NotSupported,
)
from .kinematics import hopf_gradients, jacobi_to_positions, section_lift
from .moduli import EnergyMomentum, energy_residual
from .potential import Chart, HomogeneousPotential, ustar_gradient
from .shape import (
    IntrinsicData,
    IntrinsicTable,
    ShapeCurve,
    intrinsic_table,
    is_exceptional,
    local_derivatives,
    INFLECTION_GUARD,
    resample_by_arclength,
)

log = logging.getLogger(__name__)

MAX_GAP = 5
GAP_FRACTION = 0.05
H_ZERO_TOL = 1e-12
RHO1_WARN = 1e-2
DISC_CLAMP = 1e-7
REFINE_COARSE = 60
SKIP_PENALTY = 0.01
REFINE_SPLIT = 16
REFINE_LEVEL = 0.2
ROOT_CASES = ("h_zero", "h_pos", "h_neg")


# ---------------------------------------------------------------------------
# Pointwise relations


def intrinsic_rhs(data: IntrinsicData, pot: HomogeneousPotential,
                  level: EnergyMomentum) -> tuple[float, float]:
    """``(J1, J8)`` from the intrinsic data at one point of the curve.

    ``J1 = 2 u0 - S0`` and ``J8 = (2 ubar1 - S1) / ((2 - e) S0)``; the latter
    equals ``rhodot / (rho v)`` on true motions.
    """
    if data.near_inflection or not np.isfinite(data.siegel):
        raise ExceptionalShape(f"Siegel value undefined at s={data.s:.6g}")
    return _j_values(data.ustar, data.u_tau, data.siegel, data.siegel_prime, level.e)


def _j_values(u0, ubar1, s0, s1, e):
    if e == 2:
        raise NotIdentifiable("the radial-rate relation is void for e = 2")
    j1 = 2.0 * np.asarray(u0) - s0
    j8 = (2.0 * np.asarray(ubar1) - s1) / ((2.0 - e) * s0)
    return j1, j8


@dataclass(frozen=True)
class PointwiseSolve:
    J1: float
    J8: float
    siegel: float
    rho0: float
    v0: float
    rho1: float
    root_case: str
    admissible: bool = True


def _root_case(h: float) -> str:
    if abs(h) <= H_ZERO_TOL:
        return "h_zero"
    return "h_pos" if h > 0 else "h_neg"


def _solve_arrays(j1, j8, s0, level: EnergyMomentum, branch=None):
    """Vectorized root selection; returns ``(rho0, ok, reason)`` arrays.

    ``branch`` (+1/-1 per sample) overrides the sign in front of the square
    root for ``h != 0``; None applies the default rule for each energy sign.
    """
    j1, j8, s0 = (np.atleast_1d(np.asarray(a, dtype=float)) for a in (j1, j8, s0))
    h, om2 = level.h, level.omega ** 2
    b = 4.0 * j8 ** 2 * s0 - j1
    reason = np.full(b.shape, "", dtype=object)
    case = _root_case(h)
    with np.errstate(invalid="ignore", divide="ignore"):
        if case == "h_zero":
            rho = om2 / (-b)
            reason[~(-b > 0)] = "J1 - 4 J8^2 S0 must be positive when h = 0"
        else:
            disc = b ** 2 + 8.0 * h * om2
            reason[disc < 0] = "negative discriminant"
            sign = (1.0 if h > 0 else -1.0) if branch is None else np.asarray(branch)
            root = sign * np.sqrt(np.clip(disc, 0.0, None))
            # product of the roots is -omega^2/(2h); avoids cancellation for small |h|
            rho = np.where(b * root >= 0, (b + root) / (4.0 * h), -2.0 * om2 / (b - root))
    bad_sieg = ~(s0 > 0)
    reason[bad_sieg & (reason == "")] = "Siegel value must be positive"
    reason[~(rho > 0) & (reason == "")] = "selected root is not positive"
    ok = reason == ""
    return rho, ok, reason


def solve_rho(J1: float, J8: float, S0: float, level: EnergyMomentum,
              branch: int | None = None) -> PointwiseSolve:
    """Solve ``2 h rho^2 - (4 J8^2 S0 - J1) rho - omega^2 = 0`` for ``rho0``.

    Root choice: ``h = 0`` has the single root, ``h > 0`` the ``+sqrt``
    root and ``h < 0`` the ``-sqrt`` root (the larger of two positive
    roots), unless ``branch`` forces a sign.

    Raises
    ------
    Inadmissible
        If the data admit no positive root for this level.
    """
    if level.h == 0 and level.omega == 0:
        raise NotSupported("the level (h, omega) = (0, 0) is a scaling class")
    rho, ok, reason = _solve_arrays(J1, J8, S0, level, branch)
    if not ok[0]:
        raise Inadmissible(str(reason[0]), 0)
    rho0 = float(rho[0])
    v0 = 2.0 * math.sqrt(S0 / rho0 ** (2.0 + level.e))
    rho1 = J8 * rho0 * v0
    return PointwiseSolve(float(J1), float(J8), float(S0), rho0, v0, rho1, _root_case(level.h))


def level_margin(u0, j8, s0, level: EnergyMomentum):
    """``u0 - (4 J8^2 + 1) S0 / 2 - omega sqrt(2 |h|)``; nonnegative on admissible h < 0 data."""
    return (np.asarray(u0) - 0.5 * (4.0 * np.asarray(j8) ** 2 + 1.0) * s0
            - level.omega * math.sqrt(2.0 * abs(level.h)))


@dataclass(frozen=True)
class Order2Result:
    phi1: float
    theta1: float
    rho2: float
    phi2: float
    theta2: float
    residuals: dict
    j_identity: float


def order2_verification(solve: PointwiseSolve, data: IntrinsicData, pot: HomogeneousPotential,
                        level: EnergyMomentum, chart: Chart | None = None,
                        model: str = "no-gyro") -> Order2Result:
    """Second-order Taylor coefficients in time and the order-0 residuals.

    ``(phi1, theta1)`` come from the tangent, ``(rho2, phi2, theta2)`` from
    the three linear relations that follow from the reduced equations, and
    the raw order-0 equations (radial, two shape components, energy) are
    evaluated on the result.  Valid for ``e = 1``.

    With ``model="full"`` the shape relations include the rotational
    (gyroscopic) coupling, and ``solve.siegel`` should be the effective
    value from :meth:`SizeSolution.pointwise`.
    """
    from .moduli import _check_model

    _check_model(model)
    if level.e != 1:
        raise NotSupported("order-2 relations are written for e = 1")
    chart = chart or Chart.standard()
    phi, theta = chart.spherical(data.n)
    chart.check(phi)
    e_phi, e_theta = chart.basis(phi, theta)
    sin_phi = math.sin(phi)
    f0, g0 = math.sin(2 * phi), sin_phi ** 2
    j_phi = float(data.tau @ e_phi)
    j_theta = float(data.tau @ e_theta) / sin_phi
    mu0, eta0 = ustar_gradient(pot, data.n, chart)
    u0, s0, om2, h = data.ustar, solve.siegel, level.omega ** 2, level.h
    r0, r1, v0 = solve.rho0, solve.rho1, solve.v0
    phi1, theta1 = j_phi * v0, j_theta * v0
    j4 = 0.5 * (s0 - u0)
    j5 = 2 * mu0 + f0 * j_theta ** 2 * s0
    j6 = 2 * eta0 / g0 - 2 * (f0 / g0) * j_phi * j_theta * s0
    rho2 = (j4 + om2 / (2 * r0)) / r0 ** 2
    phi2 = (j5 - r0 ** 2 * r1 * phi1) / r0 ** 3
    theta2 = (j6 - r0 ** 2 * r1 * theta1) / r0 ** 3
    # gyroscopic coupling strength in this chart; zero for the no-gyro model
    b = 0.0
    if model == "full":
        b = 2.0 * float(np.linalg.det(chart.rotation)) * level.signed_omega / r0 ** 2
        phi2 += 0.5 * b * sin_phi * theta1
        theta2 -= 0.5 * b * phi1 / sin_phi
    res = {
        "E10": 2 * r0 ** 2 * rho2 + r0 * r1 ** 2 - 2 * h * r0 - u0,
        "E20": 2 * r0 ** 3 * phi2 + 2 * r0 ** 2 * r1 * phi1 - 0.5 * r0 ** 3 * f0 * theta1 ** 2
        - 4 * mu0 - r0 ** 3 * b * sin_phi * theta1,
        "E30": 2 * g0 * r0 ** 3 * theta2 + 2 * g0 * r0 ** 2 * r1 * theta1
        + r0 ** 3 * f0 * phi1 * theta1 - 4 * eta0 + r0 ** 3 * b * sin_phi * phi1,
        "E40": r0 ** 2 * r1 ** 2 + 0.25 * r0 ** 4 * (phi1 ** 2 + g0 * theta1 ** 2) + om2
        - 2 * u0 * r0 - 2 * h * r0 ** 2,
    }
    return Order2Result(phi1, theta1, rho2, phi2, theta2, res, j_phi ** 2 + g0 * j_theta ** 2 - 1)


# ---------------------------------------------------------------------------
# Lift to configuration space


@dataclass(eq=False)
class LiftedMotion:
    t: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    masses: np.ndarray
    phase: np.ndarray

    def angular_momentum(self) -> np.ndarray:
        a, v, m = self.positions, self.velocities, self.masses
        return np.sum(m * (a[..., 0] * v[..., 1] - a[..., 1] * v[..., 0]), axis=-1)


def lift_moduli(t, rho, n, omega: float, masses, rhodot=None, ndot=None,
                spin: int = 1) -> LiftedMotion:
    """Horizontal-plus-rotation lift of a timed moduli curve to m-triangles.

    The phase of the section with real ``z1`` obeys
    ``psi' = Omega / rho^2 - (n2 n3' - n3 n2') / (2 (1 + n1))`` with
    ``Omega = spin * omega`` and ``psi(0) = 0``; it is integrated by
    cumulative Simpson over the (possibly uneven) time grid.  Velocities are
    exact given ``rhodot`` and ``ndot``; otherwise they are estimated from
    local fits in time.
    """
    t = np.asarray(t, dtype=float)
    rho = np.asarray(rho, dtype=float)
    n = np.asarray(n, dtype=float)
    if np.any(rho <= 0):
        raise ConeVertex("hyperradius must stay positive for the lift")
    if np.min(1.0 + n[:, 0]) < 1e-10:
        raise BinaryCollision((1, 2), "moduli curve passes through the 1-2 collision shape")
    if rhodot is None:
        rhodot = local_derivatives(t, rho, deg=5, order=1)[1]
    if ndot is None:
        ndot = local_derivatives(t, n, deg=5, order=1)[1]
        ndot = ndot - np.sum(ndot * n, axis=1)[:, None] * n
    rhodot = np.asarray(rhodot, dtype=float)
    ndot = np.asarray(ndot, dtype=float)
    big_omega = spin * omega
    twist = (n[:, 1] * ndot[:, 2] - n[:, 2] * ndot[:, 1]) / (2.0 * (1.0 + n[:, 0]))
    psidot = big_omega / rho ** 2 - twist
    psi = cumulative_simpson(psidot, x=t, initial=0.0) if len(t) >= 3 else \
        cumulative_trapezoid(psidot, t, initial=0.0)
    z = rho[:, None] * np.exp(1j * psi)[:, None] * section_lift(n)
    wdot = 2 * rho[:, None] * rhodot[:, None] * n + rho[:, None] ** 2 * ndot
    grads = hopf_gradients(z)
    zdot = (np.einsum("ki,kij->kj", wdot, grads) / (4 * rho[:, None] ** 2)
            + 1j * (big_omega / rho ** 2)[:, None] * z)
    m = np.asarray(masses, dtype=float)
    return LiftedMotion(t, jacobi_to_positions(m, z), jacobi_to_positions(m, zdot), m, psi)


# ---------------------------------------------------------------------------
# Full reconstruction


@dataclass(eq=False)
class ReconstructedMotion:
    """Motion recovered from a geometric curve, indexed by resampled arc length."""

    s: np.ndarray
    t: np.ndarray
    rho: np.ndarray
    rhodot: np.ndarray
    v: np.ndarray
    n: np.ndarray
    ndot: np.ndarray
    level: EnergyMomentum
    root_case: np.ndarray
    lift: LiftedMotion | None
    table: IntrinsicTable
    diagnostics: dict = field(default_factory=dict)

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    @property
    def positions(self) -> np.ndarray:
        return self.lift.positions

    @property
    def velocities(self) -> np.ndarray:
        return self.lift.velocities

    def rho_at(self, times) -> np.ndarray:
        spline = make_interp_spline(self.t, self.rho, k=3)
        return spline(np.asarray(times, dtype=float))

    def resample_in_time(self, times):
        """Positions and velocities at ``times`` by cubic Hermite interpolation."""
        from scipy.interpolate import CubicHermiteSpline

        times = np.asarray(times, dtype=float)
        pos = self.lift.positions.reshape(len(self.t), -1)
        vel = self.lift.velocities.reshape(len(self.t), -1)
        spline = CubicHermiteSpline(self.t, pos, vel)
        p = spline(times).reshape(len(times), 3, 2)
        v = spline.derivative()(times).reshape(len(times), 3, 2)
        return p, v


def _flagged_runs(flags: np.ndarray):
    runs, k = [], 0
    while k < len(flags):
        if flags[k]:
            j = k
            while j < len(flags) and flags[j]:
                j += 1
            runs.append((k, j - k))
            k = j
        else:
            k += 1
    return runs


def fill_gaps(table: IntrinsicTable, max_gap: int = MAX_GAP):
    """Interpolate Siegel data across short flagged runs; return ``(S, S', runs)``."""
    flags = np.asarray(table.near_inflection, dtype=bool)
    runs = _flagged_runs(flags)
    for start, length in runs:
        if length > max_gap:
            raise GapTooLong(f"{length} consecutive samples near an inflection", start, length)
    sieg, sprime = table.siegel.copy(), table.siegel_prime.copy()
    if runs:
        good = ~flags
        if good.sum() < 4:
            raise ExceptionalShape("too few samples with a defined Siegel value")
        for arr in (sieg, sprime):
            spline = make_interp_spline(table.s[good], arr[good], k=3)
            arr[flags] = spline(table.s[flags])
    return sieg, sprime, runs


def _fill_runs(s, arrays, flags, max_gap: int = MAX_GAP):
    """Spline-interpolate ``arrays`` across flagged runs no longer than ``max_gap``."""
    runs = _flagged_runs(flags)
    for start, length in runs:
        if length > max_gap:
            raise GapTooLong(f"{length} consecutive singular samples", start, length)
    if runs:
        good = ~flags
        if good.sum() < 4:
            raise ExceptionalShape("too few regular samples")
        for arr in arrays:
            arr[flags] = make_interp_spline(s[good], arr[good], k=3)(s[flags])
    return runs


def _branch_speed(a, b, c, sigma):
    """Root of ``a v^2 + b v = c`` with ``sign(2 a v + b) = sigma``, NaN unless positive.

    ``sigma = +1`` is the regular branch, the continuation of
    ``v^2 = c / a`` as ``b -> 0``.  A slightly negative discriminant is
    rounded to zero so that samples at a branch touch survive noise.
    """
    disc = b * b + 4.0 * a * c
    disc = np.where((disc < 0) & (disc > -DISC_CLAMP * (b * b + np.abs(4.0 * a * c))), 0.0, disc)
    with np.errstate(invalid="ignore", divide="ignore"):
        root = np.sqrt(disc)
        # pick the cancellation-free form for each sign combination
        same = (sigma * b) <= 0
        v = np.where(same, (-b + sigma * root) / (2.0 * a), 2.0 * c / (b + sigma * root))
    return np.where((disc >= 0) & (v > 0), v, np.nan)


def full_size_relations(rho, table: IntrinsicTable, level: EnergyMomentum, orientation: int = 1,
                        branch: int = 1):
    """Speed, radial rate and energy residual implied by a trial size ``rho``.

    With ``Omega`` the signed angular momentum (times the curve orientation),
    the normal and tangential shape equations give

        K rho^(2+e) v^2 + 2 Omega rho^e v = 4 U*_nu,
        (e - 2) rho^(e-1) v (K rho^2 v + 2 Omega) rho'
            = 4 U*_nu' - 8 K U*_tau - K' rho^(2+e) v^2 - 8 Omega U*_tau / (v rho^2),

    with ``rho' = d rho / ds``; the energy integral then is a scalar equation
    for ``rho``.  The first relation is quadratic in ``v`` and ``branch``
    selects the root (see :func:`_branch_speed`).  Returns
    ``(v, rhodot, residual)``, NaN where no positive speed exists.  ``rho``
    broadcasts against the table's samples.
    """
    e = level.e
    om = orientation * level.signed_omega
    k, kp = table.curvature, table.curvature_prime
    ut, un, unp, u = table.u_tau, table.u_nu, table.u_nu_prime, table.ustar
    if rho.ndim == 2:
        k, kp, ut, un, unp, u = (a[:, None] for a in (k, kp, ut, un, unp, u))
    v = _branch_speed(k * rho ** (2.0 + e), 2.0 * om * rho ** e, 4.0 * un, branch)
    with np.errstate(invalid="ignore", divide="ignore"):
        num = 4.0 * unp - 8.0 * k * ut - kp * rho ** (2.0 + e) * v ** 2 \
            - 8.0 * om * ut / (v * rho ** 2)
        rhodot = rho * num * v / (4.0 * (e - 2.0) * un)
        resid = (0.5 * rhodot ** 2 + rho ** 2 * v ** 2 / 8.0 + level.omega ** 2 / (2.0 * rho ** 2)
                 - u / rho ** e - level.h)
    return v, rhodot, resid


class _Rows:
    """Row subset of an intrinsic table, enough for :func:`full_size_relations`."""

    FIELDS = ("curvature", "curvature_prime", "u_tau", "u_nu", "u_nu_prime", "ustar")

    def __init__(self, table, rows):
        for name in self.FIELDS:
            setattr(self, name, getattr(table, name)[rows])


def _size_brackets(x, g, finite, rows_of, table, level, orientation, branch):
    """Flat arrays ``(row, lo, hi)`` bracketing roots of the size equation.

    ``x`` holds one grid per row (row ``i`` belongs to sample ``rows_of[i]``).
    Brackets are sign changes between grid points, plus intervals ending
    where the speed stops existing (the merge point of the two roots of the
    normal relation), located by bisection.
    """
    rows, lo, hi = [], [], []
    both = finite[:, 1:] & finite[:, :-1]
    r, c = np.nonzero(both & (np.sign(g[:, 1:]) * np.sign(g[:, :-1]) <= 0))
    rows.append(rows_of[r]), lo.append(x[r, c]), hi.append(x[r, c + 1])
    r, c = np.nonzero(finite[:, 1:] ^ finite[:, :-1])
    if r.size:
        in_left = finite[r, c]
        near = np.where(in_left, x[r, c], x[r, c + 1])
        inside, outside = near.copy(), np.where(in_left, x[r, c + 1], x[r, c])
        g_near = g[r, np.where(in_left, c, c + 1)]
        sub = _Rows(table, rows_of[r])
        for _ in range(60):
            mid = 0.5 * (inside + outside)
            ok = np.isfinite(full_size_relations(mid, sub, level, orientation, branch)[2])
            inside = np.where(ok, mid, inside)
            outside = np.where(ok, outside, mid)
        g_edge = full_size_relations(inside, sub, level, orientation, branch)[2]
        keep = np.isfinite(g_edge) & (np.sign(g_edge) * np.sign(g_near) <= 0)
        rows.append(rows_of[r][keep]), lo.append(np.minimum(near, inside)[keep])
        hi.append(np.maximum(near, inside)[keep])
    return np.concatenate(rows), np.concatenate(lo), np.concatenate(hi)


def _energy_scale(rho, table, level):
    e = level.e
    u = table.ustar[:, None] if np.ndim(rho) == 2 else table.ustar
    return np.abs(level.h) + u / rho ** e + level.omega ** 2 / (2.0 * rho ** 2)


def _bisect(rows, a, b, table, level, orientation, branch):
    sub = _Rows(table, rows)
    ga = full_size_relations(a, sub, level, orientation, branch)[2]
    for _ in range(200):
        if b.size == 0 or np.max(np.abs(b - a) / b) < 4e-16:
            break
        mid = 0.5 * (a + b)
        gm = full_size_relations(mid, sub, level, orientation, branch)[2]
        left = np.isfinite(gm) & (np.sign(gm) == np.sign(ga))
        a = np.where(left, mid, a)
        ga = np.where(left, gm, ga)
        b = np.where(left, b, mid)
    return 0.5 * (a + b)


def size_candidates(table: IntrinsicTable, level: EnergyMomentum, orientation: int = 1,
                    bounds: tuple = (1e-3, 1e3), flags=None, per_decade: int = REFINE_COARSE,
                    refine: int = REFINE_SPLIT):
    """All roots of the size equation at every sample, on both speed branches.

    A coarse logarithmic grid is scanned first; cells with a sign change, a
    merge point or a small residual (relative to the energy terms) are
    split ``refine`` times and scanned again, which separates close pairs
    of roots.  Returns arrays ``(rho, v, rhodot, branch)`` of shape
    ``(N, k)`` padded with NaN (``branch`` with 0), each row sorted by
    decreasing ``rho``.
    """
    n = len(table)
    flags = np.zeros(n, dtype=bool) if flags is None else flags
    lo, hi = bounds
    grid = np.geomspace(lo, hi, int(per_decade * math.log10(hi / lo)) + 1)
    coarse = np.broadcast_to(grid, (n, len(grid))).copy()
    found = []
    for branch in (1, -1):
        v, _, g = full_size_relations(coarse, table, level, orientation, branch)
        finite = np.isfinite(g) & np.isfinite(v) & ~flags[:, None]
        small = finite & (np.abs(g) < REFINE_LEVEL * _energy_scale(coarse, table, level))
        mark = (small[:, 1:] | small[:, :-1] | (finite[:, 1:] ^ finite[:, :-1])
                | (finite[:, 1:] & finite[:, :-1] & (np.sign(g[:, 1:]) != np.sign(g[:, :-1]))))
        mark[:, 1:] |= mark[:, :-1].copy()
        mark[:, :-1] |= mark[:, 1:].copy()
        r, c = np.nonzero(mark)
        frac = np.linspace(0.0, 1.0, refine + 1)
        fine = grid[c][:, None] * (grid[c + 1] / grid[c])[:, None] ** frac[None, :]
        sub = _Rows(table, r)
        fv, _, fg = full_size_relations(fine, sub, level, orientation, branch)
        ffin = np.isfinite(fg) & np.isfinite(fv)
        rows, a, b = _size_brackets(fine, fg, ffin, r, table, level, orientation, branch)
        roots = _bisect(rows, a, b, table, level, orientation, branch)
        vv, rd, _ = full_size_relations(roots, _Rows(table, rows), level, orientation, branch)
        ok = np.isfinite(vv) & np.isfinite(rd)
        found.append((rows[ok], roots[ok], vv[ok], rd[ok], np.full(ok.sum(), branch)))
    rows, rho, v, rd, br = (np.concatenate(x) for x in zip(*found))
    order = np.lexsort((-rho, rows))
    rows, rho, v, rd, br = rows[order], rho[order], v[order], rd[order], br[order]
    # drop duplicates (a root at the merge point is found on both branches)
    dup = np.zeros(len(rows), dtype=bool)
    dup[1:] = (rows[1:] == rows[:-1]) & (np.abs(rho[1:] - rho[:-1]) <= 1e-10 * rho[1:]) \
        & (np.abs(v[1:] - v[:-1]) <= 1e-6 * v[1:])
    rows, rho, v, rd, br = rows[~dup], rho[~dup], v[~dup], rd[~dup], br[~dup]
    counts = np.bincount(rows, minlength=n)
    width = max(int(counts.max(initial=0)), 1)
    slot = np.arange(len(rows)) - np.repeat(np.cumsum(counts) - counts, counts)
    out = [np.full((n, width), np.nan) for _ in range(3)] + [np.zeros((n, width), dtype=int)]
    for arr, val in zip(out, (rho, v, rd, br)):
        arr[rows, slot] = val
    return tuple(out)


def select_size_path(s, rho, v, rhodot, skip=None, max_skip: int | None = None,
                     penalty: float = SKIP_PENALTY) -> np.ndarray:
    """Pick one candidate per sample, or none, by dynamic programming.

    The cost of a step between two kept samples is the mismatch between the
    secant slope of ``rho`` and the mean of the predicted slopes
    ``rhodot / v`` (times the step), plus the relative jump in ``v``; the
    true size curve makes both small, while spurious roots and wrong speed
    branches do not.  A sample may be left out at cost ``penalty``, at most
    ``max_skip`` in a row, which lets the path bridge stretches where the
    true root is missing.  Samples in ``skip`` are always left out.  Returns
    the column index per sample, -1 where the sample is left out.
    """
    n, k = rho.shape
    skip = np.zeros(n, dtype=bool) if skip is None else np.asarray(skip, dtype=bool)
    max_skip = max(MAX_GAP, int(GAP_FRACTION * n)) if max_skip is None else max_skip
    valid = np.isfinite(rho) & np.isfinite(v) & np.isfinite(rhodot) & ~skip[:, None]
    slope = np.where(valid, rhodot / v, np.nan)
    cost = np.full((n, k), np.inf)
    back = np.full((n, k, 2), -1, dtype=int)
    cost[:max_skip + 1] = np.where(valid[:max_skip + 1],
                                   penalty * np.arange(min(n, max_skip + 1))[:, None], np.inf)
    for j in range(1, n):
        if not valid[j].any():
            continue
        lo = max(0, j - max_skip - 1)
        prev = np.arange(lo, j)
        ok = np.isfinite(cost[prev]).any(axis=1)
        prev = prev[ok]
        if prev.size == 0:
            continue
        ds = (s[j] - s[prev])[:, None, None]
        r0, r1 = rho[prev][:, :, None], rho[j][None, None, :]
        v0, v1 = v[prev][:, :, None], v[j][None, None, :]
        mean = 0.5 * (slope[prev][:, :, None] + slope[j][None, None, :])
        step = (np.abs((r1 - r0) - mean * ds) / np.fmax(r0, r1)
                + np.abs(v1 - v0) / np.fmax(v0, v1))
        gap = penalty * (j - prev - 1)[:, None, None]
        total = cost[prev][:, :, None] + np.where(np.isfinite(step), step, np.inf) + gap
        flat = total.reshape(-1, k)
        best = np.argmin(flat, axis=0)
        here = flat[best, np.arange(k)]
        better = valid[j] & (here < cost[j])
        cost[j] = np.where(better, here, cost[j])
        back[j, :, 0] = np.where(better, prev[best // k], back[j, :, 0])
        back[j, :, 1] = np.where(better, best % k, back[j, :, 1])
    tail = penalty * (n - 1 - np.arange(n))[:, None]
    final = np.where(np.arange(n)[:, None] >= n - max_skip - 1, cost + tail, np.inf)
    choice = np.full(n, -1, dtype=int)
    if not np.isfinite(final).any():
        return choice
    j, c = np.unravel_index(int(np.argmin(final)), final.shape)
    while j >= 0:
        choice[j] = c
        j, c = back[j, c]
    return choice


def _consistent_branch(s, table, sieg, sprime, level):
    """Per-sample root sign matching ``d rho/ds * v`` to the pointwise radial rate."""
    j1, j8 = _j_values(table.ustar, table.u_tau, sieg, sprime, level.e)
    scores = []
    for sign in (1.0, -1.0):
        rho, ok, _ = _solve_arrays(j1, j8, sieg, level, np.full(len(s), sign))
        rho = np.where(ok, rho, np.nan)
        v = 2.0 * np.sqrt(sieg / rho ** (2.0 + level.e))
        drho = local_derivatives(s, np.nan_to_num(rho, nan=1.0), deg=2, order=1)[1]
        scores.append(np.where(ok, np.abs(drho * v - j8 * rho * v), np.inf))
    return np.where(scores[0] <= scores[1], 1.0, -1.0)


@dataclass(eq=False)
class SizeSolution:
    """Pointwise size, speed and radial rate along a curve.

    ``accepted`` marks samples solved directly (before any gap filling);
    ``branches`` is the speed branch per sample (+1 regular); ``margin`` is
    the closed-form admissibility margin of the no-gyro model for ``h < 0``.
    """

    rho: np.ndarray
    v: np.ndarray
    rhodot: np.ndarray
    accepted: np.ndarray
    branches: np.ndarray
    runs: list
    root_case: str
    margin: np.ndarray | None = None
    reasons: np.ndarray | None = None
    exponent: float = 1.0

    def pointwise(self, i: int) -> PointwiseSolve:
        """Sample ``i`` packaged like :func:`solve_rho` output.

        ``siegel`` holds the effective value ``rho^(2+e) v^2 / 4``, which is
        what the order-2 relations consume; ``J1`` is not defined here.
        """
        r, v, rd = float(self.rho[i]), float(self.v[i]), float(self.rhodot[i])
        s_eff = r ** (2.0 + self.exponent) * v * v / 4.0
        return PointwiseSolve(math.nan, rd / (r * v), s_eff, r, v, rd, self.root_case,
                              bool(self.accepted[i]))


def solve_along_curve(table: IntrinsicTable, level: EnergyMomentum, model: str = "full",
                      orientation: int = 1, root_policy: str | None = None,
                      rho_bounds: tuple = (1e-3, 1e3), guard: float = INFLECTION_GUARD,
                      strict: bool = True) -> SizeSolution:
    """Solve the pointwise relations for ``(rho, v, rhodot)`` at every sample.

    With ``strict`` (the default) inadmissible samples raise and short
    singular runs are filled by interpolation; otherwise they are returned as
    NaN with ``accepted`` false, which is what coverage statistics need.
    See :func:`reconstruct_motion` for ``model`` and ``root_policy``.
    """
    from .moduli import _check_model

    _check_model(model)
    if level.e == 2:
        raise NotIdentifiable("the radial-rate relation is void for e = 2")
    if root_policy is None:
        root_policy = "consistent" if model == "full" else "largest"
    if root_policy not in ("largest", "consistent"):
        raise ValueError(f"unknown root policy {root_policy!r}")
    s = table.s
    n = len(s)
    case = _root_case(level.h)
    if model == "no-gyro":
        if strict:
            sieg, sprime, runs = fill_gaps(table)
            bad = np.flatnonzero(~(sieg > 0))
            if bad.size:
                raise Inadmissible("Siegel value must be positive", int(bad[0]))
        else:
            sieg, sprime, runs = table.siegel, table.siegel_prime, []
        branch = None
        if root_policy == "consistent" and case != "h_zero":
            branch = _consistent_branch(s, table, sieg, sprime, level)
        with np.errstate(invalid="ignore", divide="ignore"):
            j1, j8 = _j_values(table.ustar, table.u_tau, sieg, sprime, level.e)
            rho, ok, reason = _solve_arrays(j1, j8, sieg, level, branch)
            if not strict:
                ok &= ~np.asarray(table.near_inflection, dtype=bool)
            elif not np.all(ok):
                k = int(np.flatnonzero(~ok)[0])
                raise Inadmissible(f"sample {k}: {reason[k]}", k)
            rho = np.where(ok, rho, np.nan)
            v = 2.0 * np.sqrt(sieg / rho ** (2.0 + level.e))
            rhodot = j8 * rho * v
        margin = level_margin(table.ustar, j8, sieg, level) if case == "h_neg" else None
        return SizeSolution(rho, v, rhodot, ok, np.ones(n, dtype=int), runs, case, margin,
                            reason, level.e)

    flags = np.abs(table.u_nu) < guard
    cand = size_candidates(table, level, orientation, rho_bounds, flags)
    if root_policy == "largest":
        regular = np.where(cand[3] == 1, np.nan_to_num(cand[0], nan=-1.0), -1.0)
        pick = np.where(np.max(regular, axis=1) > 0, np.argmax(regular, axis=1), -1)
    else:
        pick = select_size_path(s, cand[0], cand[1], cand[2], flags)
    idx = np.arange(n)
    rho, v, rhodot = (np.where(pick >= 0, c[idx, np.clip(pick, 0, None)], np.nan)
                      for c in cand[:3])
    branches = np.where(pick >= 0, cand[3][idx, np.clip(pick, 0, None)], 0)
    accepted = pick >= 0
    runs: list = []
    if strict:
        # no root at all: either nothing admissible, or an ill-conditioned stretch
        # where the radial-rate relation is 0/0 and the root is only tangent
        if not np.any(accepted):
            raise Inadmissible("no positive root of the size equation in the search interval", 0)
        runs = _fill_runs(s, [rho, v, rhodot], ~accepted, max(MAX_GAP, int(GAP_FRACTION * n)))
        if not np.all(np.isfinite(v) & (v > 0)):
            k = int(np.flatnonzero(~(v > 0))[0])
            raise Inadmissible("no positive shape speed at the recovered size", k)
        if np.any(branches == 0):
            filled = np.flatnonzero(branches != 0)
            branches = branches[filled[np.clip(np.searchsorted(filled, idx), 0, filled.size - 1)]]
    return SizeSolution(rho, v, rhodot, accepted, branches, runs, case, exponent=level.e)


def reconstruct_motion(curve: ShapeCurve, pot: HomogeneousPotential, level: EnergyMomentum,
                       masses=None, samples: int = 2048, model: str = "full",
                       root_policy: str | None = None, radial_rate: float | None = None,
                       lift: bool = True, rho_bounds: tuple = (1e-3, 1e3),
                       guard: float = INFLECTION_GUARD) -> ReconstructedMotion:
    """Reconstruct the motion whose geometric shape curve is ``curve``.

    Parameters
    ----------
    curve : ShapeCurve
        Oriented curve; any time table it carries is ignored.
    pot : HomogeneousPotential
        Potential with exponent 1 or 2.
    level : EnergyMomentum
        Energy, angular-momentum magnitude and spin of the motion.
    masses : array_like, optional
        Needed for the lift; defaults to the potential's masses.
    samples : int
        Size of the uniform arc-length grid.
    model : {"full", "no-gyro"}
        ``"full"`` keeps the gyroscopic term of the reduced equations and
        solves the resulting scalar size equation by bracketing;
        ``"no-gyro"`` uses the closed-form quadratic, exact when ``omega = 0``.
    root_policy : {"consistent", "largest"}, optional
        How the size is chosen among the roots of the size equation.
        ``"consistent"`` follows the root curve along which ``d rho/ds``
        agrees with the pointwise radial rate, across both speed branches.
        ``"largest"`` takes the largest root on the regular speed branch at
        each sample; for the no-gyro model this is the closed-form root rule
        for each energy sign.  Defaults to ``"consistent"`` for the full
        model and ``"largest"`` for the no-gyro model.
    radial_rate : float, optional
        ``rhodot`` at the first sample.  Required for ``e = 2``.
    lift : bool
        Whether to build configuration-space samples.
    rho_bounds : (float, float)
        Search interval for the size equation of the full model.

    Raises
    ------
    ExceptionalShape, GapTooLong, Inadmissible, NotIdentifiable, NotSupported
    """
    from .moduli import _check_model

    _check_model(model)
    if level.e != pot.exponent:
        raise NotSupported("level and potential disagree on the homogeneity exponent")
    if level.h == 0 and level.omega == 0:
        raise NotSupported("the level (h, omega) = (0, 0) is a scaling class")
    if root_policy is None:
        root_policy = "consistent" if model == "full" else "largest"
    if root_policy not in ("largest", "consistent"):
        raise ValueError(f"unknown root policy {root_policy!r}")
    if level.e == 2 and radial_rate is None:
        raise NotIdentifiable(
            "for e = 2 the shape curve and (h, omega) determine the motion only up to a "
            "one-parameter family; supply radial_rate")
    if curve.is_degenerate():
        raise ExceptionalShape("shape curve is a single point (homographic motion)")
    try:
        geo = resample_by_arclength(curve.strip_times(), samples)
    except DegenerateCurve as exc:
        raise ExceptionalShape(str(exc)) from exc
    table = intrinsic_table(geo, pot, guard)
    if is_exceptional(geo, table):
        raise ExceptionalShape("shape curve lies on a great circle")
    s = table.s
    margin = None
    runs: list = []

    if level.e == 2:
        t, rho, rhodot, v, branches = _radial_from_rate(table, level, radial_rate, model,
                                                        geo.orientation)
    else:
        sol = solve_along_curve(table, level, model, geo.orientation, root_policy, rho_bounds,
                                guard)
        rho, v, rhodot, branches = sol.rho, sol.v, sol.rhodot, sol.branches
        runs, margin = sol.runs, sol.margin
        t = cumulative_trapezoid(1.0 / v, s, initial=0.0)
    cases = np.full(len(s), _root_case(level.h), dtype=object)

    # Integrated form of d rho/ds = rhodot / v; differencing rho would amplify its noise.
    drift = rho - rho[0] - cumulative_trapezoid(rhodot / v, s, initial=0.0)
    spread = max(float(np.ptp(rho)), 1e-300)
    rho1_residual = float(np.max(np.abs(drift)) / spread)
    if rho1_residual > RHO1_WARN:
        log.warning("radial-rate consistency residual %.3g exceeds %.0e", rho1_residual, RHO1_WARN)
    ndot = v[:, None] * table.tau
    en = energy_residual(rho, rhodot, v, table.ustar, level)
    diag = {
        "model": model,
        "policy": root_policy,
        "samples": int(len(s)),
        "arc_length": float(s[-1]),
        "duration": float(t[-1]),
        "rho1_residual": rho1_residual,
        "energy_residual_max": float(np.max(np.abs(en))),
        "flagged_runs": [[int(a), int(b)] for a, b in runs],
        "root_cases": {c: int(np.sum(cases == c)) for c in ROOT_CASES},
        "speed_branch_switches": int(np.count_nonzero(np.diff(branches))),
    }
    if margin is not None:
        diag["level_margin_min"] = float(np.min(margin))

    lifted = None
    if lift:
        m = masses if masses is not None else pot.masses
        if m is None:
            raise NotSupported("masses are needed to lift the motion")
        lifted = lift_moduli(t, rho, table.n, level.omega, m, rhodot, ndot, level.spin)
    return ReconstructedMotion(s, t, rho, rhodot, v, table.n, ndot, level, cases, lifted,
                               table, diag)


def _conserved_shape_constant(ustar, cand):
    """Robust estimate of the constant ``c = U* - q^2/8`` from candidate speeds.

    ``cand`` has shape ``(k, N)``, one row per root of the normal relation.
    Each sample votes with the candidate closest to ``c``; ``c`` minimizes the
    median of those distances and is then refined on the inliers.  Returns
    ``(c, label, spread)`` with ``label`` the winning row per sample.
    """
    votes = ustar[None, :] - cand ** 2 / 8.0
    finite = np.isfinite(votes)
    pool = np.unique(votes[finite])
    if pool.size == 0:
        raise Inadmissible("no positive shape speed", 0)
    pool = pool[np.linspace(0, pool.size - 1, min(pool.size, 1024)).astype(int)]
    filled = np.where(finite, votes, np.inf)
    cost = np.array([np.median(np.min(np.abs(filled - c), axis=0)) for c in pool])
    c = float(pool[np.argmin(cost)])
    gap = np.abs(filled - c)
    label = np.argmin(gap, axis=0)
    idx = np.arange(len(label))
    best = gap[label, idx]
    inlier = best <= 3.0 * max(float(np.median(best)), 1e-300)
    c = float(np.mean(votes[label, idx][inlier]))
    return c, label, float(np.median(best))


def _radial_from_rate(table, level, rhodot0, model, orientation):
    """Size and time for ``e = 2`` given the initial radial rate.

    In the time ``tau`` with ``dtau = dt / rho^2`` the shape motion is
    autonomous: ``q = rho^2 v`` obeys the normal relation
    ``K q^2 + 2 Omega q = 4 U*_nu`` and the conservation law
    ``U* - q^2/8 = c``.  The normal relation fixes ``c`` (and with it which of
    its roots applies); ``q`` then comes from the conservation law, which is
    smooth where the two roots touch.  ``I = rho^2`` is quadratic in ``t``
    with ``rho^2 (rhodot^2 - 2h) = 2c - omega^2``.
    """
    if model == "no-gyro":
        cand = (2.0 * np.sqrt(table.siegel))[None, :]
    else:
        om = orientation * level.signed_omega
        cand = np.stack([_branch_speed(table.curvature, 2.0 * om, 4.0 * table.u_nu, b)
                         for b in (1, -1)])
    c, pick, _ = _conserved_shape_constant(table.ustar, cand)
    label = np.where(pick == 0, 1, -1)
    excess = table.ustar - c
    if not np.all(excess > 0):
        k = int(np.flatnonzero(~(excess > 0))[0])
        raise Inadmissible("no positive shape speed", k)
    q = np.sqrt(8.0 * excess)
    num = 2.0 * c - level.omega ** 2
    denom = rhodot0 ** 2 - 2.0 * level.h
    if denom == 0 or not num / denom > 0:
        raise Inadmissible("no positive size is compatible with the radial rate", 0)
    rho0 = math.sqrt(num / denom)
    tau = cumulative_trapezoid(1.0 / q, table.s, initial=0.0)
    h = level.h

    def inertia(t):
        return rho0 ** 2 + 2.0 * rho0 * rhodot0 * t + 2.0 * h * t ** 2

    sol = solve_ivp(lambda _, y: [inertia(y[0])], (0.0, tau[-1]), [0.0], method="DOP853",
                    t_eval=tau, rtol=1e-12, atol=1e-14)
    if sol.status != 0 or sol.y.shape[1] != len(tau):
        raise Inadmissible("time table diverges along the curve", int(sol.y.shape[1]))
    t = sol.y[0]
    big_i = inertia(t)
    if np.any(big_i <= 0):
        raise ConeVertex("reconstructed size reaches the collision vertex")
    rho = np.sqrt(big_i)
    rhodot = (rho0 * rhodot0 + 2.0 * h * t) / rho
    return t, rho, rhodot, q / big_i, label


# ---------------------------------------------------------------------------
# Congruence


def _positions_of(x):
    if hasattr(x, "positions"):
        return np.asarray(x.positions, dtype=float), getattr(x, "t", None)
    return np.asarray(x, dtype=float), None


def congruence_residual(traj_a, traj_b, masses, allow_reflection: bool = False) -> float:
    """Min over one global rotation (and optionally a reflection) of the max mass-weighted distance.

    ``traj_a`` and ``traj_b`` are ``(N, 3, 2)`` position arrays or objects with
    ``positions`` (and optionally ``t``) sampled on the same grid.
    """
    a, ta = _positions_of(traj_a)
    b, tb = _positions_of(traj_b)
    if a.shape != b.shape:
        raise GridMismatch(f"sample grids differ: {a.shape} vs {b.shape}")
    if ta is not None and tb is not None and (len(ta) != len(tb) or
                                              not np.allclose(ta, tb, rtol=0, atol=1e-9)):
        raise GridMismatch("sample times differ")
    m = np.asarray(masses, dtype=float)
    za = a[..., 0] + 1j * a[..., 1]
    candidates = [b[..., 0] + 1j * b[..., 1]]
    if allow_reflection:
        candidates.append(b[..., 0] - 1j * b[..., 1])
    best = math.inf
    for zb in candidates:
        def cost(angle, zb=zb):
            d = za - np.exp(1j * angle) * zb
            return float(np.max(np.sqrt(np.sum(m * np.abs(d) ** 2, axis=-1))))

        grid = np.linspace(0.0, 2 * math.pi, 721)[:-1]
        values = [cost(x) for x in grid]
        k = int(np.argmin(values))
        step = grid[1] - grid[0]
        res = minimize_scalar(cost, bounds=(grid[k] - step, grid[k] + step), method="bounded",
                              options={"xatol": 1e-12})
        # least-squares angle: exact for congruent inputs, where the max objective has a kink
        ls = float(np.angle(np.sum(m * za * np.conj(zb))))
        best = min(best, float(res.fun), values[k], cost(ls))
    return best
