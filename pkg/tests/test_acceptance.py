"""Acceptance criteria, one summary line each (see the terminal summary).

Some criteria contain a part that cannot hold for the model as stated;
those parts run as strict xfail tests and turn the criterion's line into
FAIL.
"""

import math

import numpy as np
import pytest

from conftest import orbit, record_acceptance, roundtrip_errors
from shapemech import scenarios
from shapemech.errors import ExceptionalShape, NotIdentifiable
from shapemech.integrator import IntegratorConfig, accelerations
from shapemech.kinematics import MTriangle
from shapemech.moduli import dynamical_length, integrate_reduced, kinetic_action
from shapemech.reconstruction import (PointwiseSolve, order2_verification, reconstruct_motion,
                                      solve_along_curve)
from shapemech.shape import geodesic_curvature, intrinsic_table, sample_latitude_circle

E2_SEEDS = (scenarios.DEFAULT_SEED, 1, 2, 3, 4)


# 1 -------------------------------------------------------------------------

def test_criterion_1_conservation():
    _, _, traj, _ = orbit("random-bounded", horizon=50.0)
    dh, dom = traj.energy_drift(), traj.momentum_drift()
    ok = dh < 1e-8 and dom < 1e-8
    record_acceptance(1, ok, f"horizon 50: |dh| = {dh:.2e}, |dOmega| = {dom:.2e} (< 1e-8)")
    assert ok


# 2 -------------------------------------------------------------------------

def inertia_at(traj, t):
    pos, _ = traj.state_at(t)
    return np.einsum("j,kjd,kjd->k", traj.masses, pos, pos)


def test_criterion_2_lagrange_jacobi():
    _, pot, traj, _ = orbit("random-bounded", horizon=50.0)
    m, pos, vel = traj.masses, traj.positions, traj.velocities
    u = np.array([float(pot.value(p)) for p in pos])
    h = float(traj.diagnostics["h"][0])
    scale = 2 * np.abs(u) + 4 * abs(h)
    # route 1: I'' = 2 sum m (|v|^2 + a . acc) with the force law
    acc = np.stack([accelerations(MTriangle(m, p, v), pot) for p, v in zip(pos, vel)])
    iddot = 2 * np.einsum("j,kjd,kjd->k", m, vel, vel) + 2 * np.einsum("j,kjd,kjd->k", m, pos, acc)
    analytic = float(np.max(np.abs(iddot - 2 * u - 4 * h) / scale))
    # route 2: fourth-order central differences of I(t) from the dense output
    idx = np.arange(5, len(traj.t) - 5, 5)
    t, d = traj.t[idx], 1e-3
    fd = (-inertia_at(traj, t + 2 * d) + 16 * inertia_at(traj, t + d) - 30 * inertia_at(traj, t)
          + 16 * inertia_at(traj, t - d) - inertia_at(traj, t - 2 * d)) / (12 * d * d)
    numeric = float(np.max(np.abs(fd - 2 * u[idx] - 4 * h) / scale[idx]))
    ok = analytic < 1e-5 and numeric < 1e-5
    record_acceptance(2, ok, f"relative residual {analytic:.1e} (force law), "
                             f"{numeric:.1e} (differenced dense output) (< 1e-5)")
    assert ok


# 3 -------------------------------------------------------------------------

def test_criterion_3_reduction_equivalence():
    _, pot, _, pc = orbit("random-bounded", horizon=20.0)
    red = integrate_reduced(pc.state(0), pot, IntegratorConfig(horizon=20.0))
    d_rho = float(np.max(np.abs(red.rho - pc.rho)))
    d_n = float(np.max(np.linalg.norm(red.n - pc.n, axis=1)))
    ok = d_rho < 1e-6 and d_n < 1e-6
    record_acceptance(3, ok, f"horizon 20: max |drho| = {d_rho:.1e}, max |dn| = {d_n:.1e} "
                             "(< 1e-6)")
    assert ok


def test_reduced_equations_without_gyroscopic_term_diverge():
    # documents why the default reduced model keeps the rotational coupling
    _, pot, _, pc = orbit("random-bounded", horizon=20.0)
    red = integrate_reduced(pc.state(0), pot, IntegratorConfig(horizon=20.0), model="no-gyro")
    assert np.max(np.abs(red.rho - pc.rho)) > 1e-1


# 4 -------------------------------------------------------------------------

def siegel_mismatch(spinless: bool, corrected: bool = False) -> float:
    _, pot, _, pc = orbit("random-bounded", spinless=spinless)
    curve = pc.shape_curve()
    tab = intrinsic_table(curve, pot)
    v = np.linalg.norm(pc.ndot, axis=1)
    keep = np.abs(tab.curvature) > 1e-6
    rhs = 4 * tab.u_nu / tab.curvature
    if corrected:
        omega = curve.orientation * pc.level().signed_omega
        rhs = rhs - 2 * omega * pc.rho * v / tab.curvature
    return float(np.max(np.abs(pc.rho ** 3 * v ** 2 / rhs - 1)[keep]))


def test_criterion_4_siegel_identity_without_rotation():
    err = siegel_mismatch(spinless=True)
    record_acceptance(4, err < 1e-4, f"omega = 0: {err:.1e}")
    assert err < 1e-4


def test_criterion_4_siegel_identity_with_gyroscopic_correction():
    err = siegel_mismatch(spinless=False, corrected=True)
    record_acceptance(4, err < 1e-4, f"omega != 0 with the rotational term: {err:.1e}")
    assert err < 1e-4


@pytest.mark.xfail(strict=True, reason="rho^3 v^2 = 4 U*_nu / K drops the rotational term "
                   "2 Omega rho v / K and fails on rotating orbits")
def test_criterion_4_siegel_identity_as_stated():
    err = siegel_mismatch(spinless=False)
    record_acceptance(4, err < 1e-4, f"as stated on random-bounded (omega = 0.54): {err:.2f} "
                                     "(< 1e-4)")
    assert err < 1e-4


# 5 -------------------------------------------------------------------------

@pytest.mark.parametrize("seed", [1, 2, 3, 4, 5])
def test_criterion_5_roundtrip_newton(seed):
    _, pot, traj, pc = orbit("random-bounded", seed=seed)
    _, err = roundtrip_errors(traj, pc, pot)
    ok = err["time"] < 1e-3 and err["rho"] < 1e-3 and err["congruence"] < 1e-2
    record_acceptance(5, ok, f"e=1 seed {seed}: t {err['time']:.1e}, rho {err['rho']:.1e}, "
                             f"congruence {err['congruence']:.1e}")
    assert ok


@pytest.mark.parametrize("seed", E2_SEEDS)
def test_criterion_5_roundtrip_inverse_square_given_radial_rate(seed):
    _, pot, traj, pc = orbit("inverse-square-rotating", seed=seed, horizon=2.5)
    _, err = roundtrip_errors(traj, pc, pot, radial_rate=float(pc.rhodot[0]), samples=8192)
    ok = err["time"] < 1e-3 and err["rho"] < 1e-3 and err["congruence"] < 1e-2
    record_acceptance(5, ok, f"e=2 seed {seed} with rhodot(0): t {err['time']:.1e}, "
                             f"rho {err['rho']:.1e}, congruence {err['congruence']:.1e}")
    assert ok


@pytest.mark.xfail(strict=True, raises=NotIdentifiable,
                   reason="for e = 2 the curve and (h, omega) leave a one-parameter family")
def test_criterion_5_roundtrip_inverse_square_from_curve_alone():
    _, pot, traj, pc = orbit("inverse-square-rotating", horizon=2.5)
    record_acceptance(5, False, "e=2 from the curve and (h, omega) alone: not identifiable")
    roundtrip_errors(traj, pc, pot)


# 6 -------------------------------------------------------------------------

def closed_form_coverage(name, **kwargs):
    _, pot, _, pc = orbit(name, **kwargs)
    tab = intrinsic_table(pc.shape_curve(), pot)
    return solve_along_curve(tab, pc.level(), model="no-gyro", strict=False)


def test_criterion_6_negative_energy_branch():
    sol = closed_form_coverage("random-bounded", spinless=True)
    margin = float(np.min(sol.margin[sol.accepted]))
    ok = sol.root_case == "h_neg" and sol.accepted.sum() > 0 and margin >= 0
    record_acceptance(6, ok, f"h<0: {sol.accepted.sum()}/{len(sol.rho)} accepted, "
                             f"min margin {margin:.3f} (>= 0)")
    assert ok


def test_criterion_6_positive_energy_branch():
    sol = closed_form_coverage("random-bounded", spinless=True, horizon=4.0, scale=3.0)
    ok = sol.root_case == "h_pos" and sol.accepted.sum() > 0
    record_acceptance(6, ok, f"h>0: {sol.accepted.sum()}/{len(sol.rho)} accepted")
    assert ok


def test_zero_energy_level_is_covered_by_the_full_model():
    _, pot, traj, pc = orbit("zero-energy", horizon=3.0)
    rec, err = roundtrip_errors(traj, pc, pot)
    assert set(rec.root_case) == {"h_zero"}
    assert err["rho"] < 1e-3 and err["congruence"] < 1e-2


@pytest.mark.xfail(strict=True, reason="h = 0 needs omega != 0, where the closed-form "
                   "zero-energy root has no admissible sample")
def test_criterion_6_zero_energy_branch():
    sol = closed_form_coverage("zero-energy", horizon=3.0)
    ok = sol.root_case == "h_zero" and sol.accepted.sum() > 0
    record_acceptance(6, ok, f"h=0 closed form: {sol.accepted.sum()}/{len(sol.rho)} accepted")
    assert ok


# 7 -------------------------------------------------------------------------

def order2_check(spinless: bool, model: str):
    _, pot, _, pc = orbit("random-bounded", spinless=spinless)
    level = pc.level()
    tab = intrinsic_table(pc.shape_curve(), pot)
    jets = pc.chart_jets()
    v = np.linalg.norm(pc.ndot, axis=1)
    worst_res, worst_rel = 0.0, 0.0
    for i in range(10, len(pc.t) - 10, 7):
        r = pc.rho[i]
        truth = PointwiseSolve(math.nan, pc.rhodot[i] / (r * v[i]), r ** 3 * v[i] ** 2 / 4, r,
                               v[i], pc.rhodot[i], "")
        out = order2_verification(truth, tab[i], pot, level, model=model)
        worst_res = max(worst_res, max(abs(x) for x in out.residuals.values()))
        for got, want in ((2 * out.rho2, pc.rhoddot[i]), (2 * out.phi2, jets[4][i]),
                          (2 * out.theta2, jets[5][i])):
            worst_rel = max(worst_rel, abs(got - want) / abs(want))
    return worst_res, worst_rel


def test_criterion_7_order2_rotating_orbit():
    res, rel = order2_check(spinless=False, model="full")
    ok = res < 1e-8 and rel < 1e-2
    record_acceptance(7, ok, f"omega != 0: residuals {res:.1e} (< 1e-8), second derivatives "
                             f"{rel:.1e} relative (< 1e-2)")
    assert ok


def test_criterion_7_order2_without_rotation():
    res, rel = order2_check(spinless=True, model="no-gyro")
    ok = res < 1e-8 and rel < 1e-2
    record_acceptance(7, ok, f"omega = 0: residuals {res:.1e}, second derivatives {rel:.1e}")
    assert ok


# 8 -------------------------------------------------------------------------

def test_criterion_8_collinear_stays_on_equator():
    _, _, _, pc = orbit("euler-collinear")
    dev = float(np.max(np.abs(pc.n[:, 2])))
    record_acceptance(8, dev < 1e-9, f"collinear |n3| {dev:.1e} (< 1e-9)")
    assert dev < 1e-9


def test_criterion_8_lagrange_is_exceptional():
    _, pot, _, pc = orbit("lagrange-circular")
    skipped = False
    try:
        reconstruct_motion(pc.shape_curve(keep_times=False), pot, pc.level())
    except ExceptionalShape:
        skipped = True
    record_acceptance(8, skipped, "Lagrange circular skipped as exceptional")
    assert skipped


def test_criterion_8_latitude_circle_convergence():
    phi = 1.0
    counts = (25, 50, 100)
    errs = [float(np.max(np.abs(geodesic_curvature(sample_latitude_circle(phi, c, math.pi))
                                - 1 / math.tan(phi)))) for c in counts]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = bool(np.all(rates >= 1.9)) and errs[-1] < 1e-5
    record_acceptance(8, ok, f"latitude circle K error {errs[-1]:.1e} at N=100, observed "
                             f"orders {', '.join(f'{r:.1f}' for r in rates)} (>= 2)")
    assert ok


def test_criterion_8_dynamical_length_identity():
    worst = 0.0
    for spinless in (False, True):
        _, pot, _, pc = orbit("random-bounded", spinless=spinless)
        length = dynamical_length(pc, pc.level(), pot)
        worst = max(worst, abs(length / kinetic_action(pc) - 1))
    record_acceptance(8, worst < 1e-6, f"dynamical length vs sqrt2 int T dt {worst:.1e} (< 1e-6)")
    assert worst < 1e-6

