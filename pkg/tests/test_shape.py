import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.optimize import brentq

import oracles
from shapemech.errors import DegenerateCurve, InsufficientSamples, SchemaError
from shapemech.potential import Chart, newton, sphere_gradient
from shapemech.shape import (ShapeCurve, frame_and_speed, geodesic_curvature,
                             great_circle_residual, intrinsic_table, is_exceptional,
                             resample_by_arclength, sample_latitude_circle)

EQUAL = (1 / 3, 1 / 3, 1 / 3)


def chart_curve(t, phi_fn, theta_fn):
    phi, theta = phi_fn(t), theta_fn(t)
    return ShapeCurve(np.stack([np.sin(phi) * np.cos(theta), np.sin(phi) * np.sin(theta),
                                np.cos(phi)], 1), t)


def test_equator_frame_and_speed():
    t = np.linspace(0.0, 2.0, 41)
    omega = 1.5
    curve = chart_curve(t, lambda t: np.full_like(t, math.pi / 2), lambda t: omega * t)
    tau, nu, v = frame_and_speed(curve, 20)
    th = omega * t[20]
    assert np.allclose(tau, [-math.sin(th), math.cos(th), 0.0], atol=1e-9)
    assert np.allclose(nu, [0.0, 0.0, 1.0], atol=1e-9)
    assert v == pytest.approx(omega, rel=1e-8)
    assert abs(geodesic_curvature(curve, 20)) < 1e-8


def test_frame_needs_enough_samples():
    curve = ShapeCurve(sample_latitude_circle(1.0, 5).points)
    with pytest.raises(InsufficientSamples):
        frame_and_speed(curve, 0)


@given(st.floats(0.6, 2.4), st.floats(0.05, 0.4), st.floats(0.5, 2.0), st.floats(-2.0, 2.0))
def test_curvature_and_speed_match_chart_formulas(phi0, amp, wphi, wtheta):
    if abs(wtheta) < 0.2:
        return
    t = np.linspace(0.0, 1.0, 201)
    curve = chart_curve(t, lambda t: phi0 + amp * np.sin(wphi * t), lambda t: wtheta * t)
    k = 100
    phi = phi0 + amp * math.sin(wphi * t[k])
    dphi = amp * wphi * math.cos(wphi * t[k])
    ddphi = -amp * wphi ** 2 * math.sin(wphi * t[k])
    expected_k = oracles.chart_curvature(phi, dphi, wtheta, ddphi, 0.0)
    expected_v = oracles.chart_speed(phi, 0.0, dphi, wtheta)
    assert geodesic_curvature(curve, k) == pytest.approx(expected_k, abs=1e-6 * (1 + abs(expected_k)))
    assert frame_and_speed(curve, k)[2] == pytest.approx(expected_v, rel=1e-7)


def test_orientation_flips_normal_and_curvature_but_not_siegel():
    pot = newton((0.2, 0.3, 0.5))
    curve = sample_latitude_circle(1.1, 120, span=2.0)
    a = intrinsic_table(curve, pot)
    b = intrinsic_table(curve.with_orientation(-1), pot)
    assert np.allclose(b.nu, -a.nu) and np.allclose(b.curvature, -a.curvature)
    assert np.allclose(b.u_nu, -a.u_nu)
    assert np.allclose(b.siegel, a.siegel, rtol=1e-12)
    # traversing backwards also flips the curvature sign
    back = geodesic_curvature(curve.reversed())
    assert np.allclose(back[::-1], -geodesic_curvature(curve), rtol=1e-8)


def test_latitude_circle_curvature_converges():
    phi = 1.0
    errors = []
    counts = (25, 50, 100)
    for count in counts:
        kappa = geodesic_curvature(sample_latitude_circle(phi, count, span=math.pi))
        errors.append(np.max(np.abs(kappa - 1 / math.tan(phi))))
    assert errors[-1] < 1e-6
    rates = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all(rates > 1.9)


def test_great_circle_is_exceptional_and_latitude_circle_is_not():
    pot = newton((0.2, 0.3, 0.5))
    ang = np.linspace(0.1, 1.5, 80)
    axis_a, axis_b = np.array([1.0, 0.0, 0.0]), np.array([0.0, 0.6, 0.8])
    arc = ShapeCurve(np.outer(np.cos(ang), axis_a) + np.outer(np.sin(ang), axis_b))
    assert great_circle_residual(arc.points) < 1e-14
    assert is_exceptional(arc, pot=pot)
    assert not is_exceptional(sample_latitude_circle(1.0, 80, span=1.5), pot=pot)
    assert is_exceptional(ShapeCurve(np.tile([0.0, 0.0, 1.0], (10, 1))))
    with pytest.raises(ValueError):
        is_exceptional(arc)


def test_level_set_has_purely_normal_gradient():
    pot = newton(EQUAL)
    chart = Chart.standard()
    level = float(pot.ustar(chart.point(0.6, 0.0)))
    thetas = np.linspace(0.0, 1.2, 90)
    phis = [brentq(lambda p: float(pot.ustar(chart.point(p, th))) - level, 0.05, 1.2)
            for th in thetas]
    curve = ShapeCurve(np.array([chart.point(p, th) for p, th in zip(phis, thetas)]))
    tab = intrinsic_table(curve, pot)
    grad = np.linalg.norm(sphere_gradient(pot, curve.points), axis=1)
    inner = slice(5, -5)
    assert np.max(np.abs(tab.u_tau[inner])) < 1e-6 * np.max(grad)
    assert np.allclose(np.abs(tab.siegel[inner]), grad[inner] / np.abs(tab.curvature[inner]),
                       rtol=1e-5)


def test_timed_jets_agree_with_fitted_geometry(bounded):
    _, pot, _, pc = bounded
    sl = slice(0, 400)
    jets = ShapeCurve(pc.n[sl], pc.t[sl], pc.ndot[sl], pc.nddot[sl])
    fitted = ShapeCurve(pc.n[sl], pc.t[sl])
    assert jets.length == pytest.approx(fitted.length, rel=1e-6)
    ka, kb = geodesic_curvature(jets), geodesic_curvature(fitted)
    inner = slice(10, -10)
    assert np.max(np.abs(ka[inner] - kb[inner])) < 1e-3 * (1 + np.max(np.abs(ka)))


def test_resample_keeps_length_and_drops_times():
    curve = chart_curve(np.linspace(0, 2, 150), lambda t: 1.0 + 0.3 * np.sin(t), lambda t: t)
    out = resample_by_arclength(curve, 200)
    assert not out.has_times
    assert out.length == pytest.approx(curve.length, rel=1e-8)
    assert np.allclose(np.diff(out.arclength), out.length / 199)
    again = resample_by_arclength(out, 200)
    assert np.max(np.abs(again.points - out.points)) < 1e-8
    with pytest.raises(DegenerateCurve):
        resample_by_arclength(ShapeCurve(np.tile([0.0, 0.0, 1.0], (10, 1))), 20)


def test_latitude_arc_length():
    curve = sample_latitude_circle(0.8, 200, span=3.0)
    assert curve.length == pytest.approx(3.0 * math.sin(0.8), rel=1e-10)


def test_csv_round_trip(tmp_path):
    curve = sample_latitude_circle(1.2, 30, span=2.0).with_orientation(-1)
    path = tmp_path / "curve.csv"
    curve.to_csv(path)
    back = ShapeCurve.from_csv(path)
    assert back.orientation == -1
    assert np.array_equal(back.points, curve.points)
    chart_text = "t,phi,theta\n0,1.0,0.0\n1,1.0,0.5\n2,1.1,1.0\n"
    timed = ShapeCurve.from_csv(chart_text)
    assert timed.has_times and timed.points[1] == pytest.approx(
        [math.sin(1.0) * math.cos(0.5), math.sin(1.0) * math.sin(0.5), math.cos(1.0)])


@pytest.mark.parametrize("text", ["# only a comment\n", "a,b,c\n1,2,3\n", "s,nx,ny,nz\n0,x,0,1\n"])
def test_csv_schema_errors(text):
    with pytest.raises(SchemaError):
        ShapeCurve.from_csv(text)


def test_curve_constructor_checks():
    with pytest.raises(ValueError):
        ShapeCurve([[0.0, 0.0, 2.0]])
    with pytest.raises(ValueError):
        ShapeCurve([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0]], times=[1.0, 0.5])
    with pytest.raises(ValueError):
        ShapeCurve([[0.0, 0.0, 1.0]], orientation=0)
