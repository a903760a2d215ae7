import json
import math
import subprocess
import sys

import numpy as np
import pytest

from shapemech.cli import main, read_table
from shapemech.errors import SchemaError

SHORT = {"horizon": 2.0, "sample_interval": 0.02}
USTAR_EQUILATERAL = 0.19245008972987526


def scenario(tmp_path, obj, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(obj))
    return str(path)


def bounded_file(tmp_path, **extra):
    return scenario(tmp_path, {"orbit": "random-bounded", "name": "bounded", "integrator": SHORT,
                               **extra})


def test_simulate_writes_documented_files(tmp_path):
    out = tmp_path / "out"
    assert main(["simulate", "--scenario", bounded_file(tmp_path), "--out", str(out)]) == 0
    folder = out / "bounded"
    cols, header = read_table(folder / "trajectory.csv", ["t", "x1", "vy3", "I", "h"])
    assert len(cols["t"]) == 101 and cols["t"][-1] == pytest.approx(2.0)
    masses = [float(x) for x in header["masses"].split(",")]
    assert sum(masses) == pytest.approx(1.0)
    assert np.ptp(cols["h"]) < 1e-9
    moduli, _ = read_table(folder / "moduli.csv", ["t", "rho", "phi", "theta"])
    assert np.allclose(moduli["rho"], np.sqrt(cols["I"]), rtol=1e-12)
    diag = json.loads((folder / "diagnostics.json").read_text())
    assert diag["truncated"] is False and diag["energy_drift"] < 1e-9
    shape, header = read_table(folder / "shape.csv", ["s", "nx", "ny", "nz"])
    assert header["orientation"] == "+1"
    assert np.allclose(shape["nx"] ** 2 + shape["ny"] ** 2 + shape["nz"] ** 2, 1.0)


def test_runs_are_byte_identical(tmp_path):
    spec = bounded_file(tmp_path)
    for run in ("a", "b"):
        assert main(["simulate", "--scenario", spec, "--out", str(tmp_path / run)]) == 0
    for name in ("trajectory.csv", "moduli.csv", "shape.csv", "diagnostics.json"):
        a = (tmp_path / "a" / "bounded" / name).read_bytes()
        assert a == (tmp_path / "b" / "bounded" / name).read_bytes()


def test_seed_override_changes_the_orbit(tmp_path):
    spec = bounded_file(tmp_path)
    main(["simulate", "--scenario", spec, "--out", str(tmp_path / "a")])
    main(["simulate", "--scenario", spec, "--out", str(tmp_path / "b"), "--seed", "7"])
    a = (tmp_path / "a" / "bounded" / "trajectory.csv").read_text()
    b = (tmp_path / "b" / "bounded" / "trajectory.csv").read_text()
    assert a != b


def test_reduce_matches_simulate(tmp_path):
    spec = bounded_file(tmp_path)
    out = tmp_path / "out"
    assert main(["simulate", "--scenario", spec, "--out", str(out)]) == 0
    assert main(["reduce", "--scenario", spec, "--out", str(out)]) == 0
    full, _ = read_table(out / "bounded" / "moduli.csv", ["rho", "phi"])
    red, _ = read_table(out / "bounded" / "reduced_moduli.csv", ["rho", "phi"])
    assert np.max(np.abs(full["rho"] - red["rho"])) < 1e-6
    assert np.max(np.abs(full["phi"] - red["phi"])) < 1e-6
    assert (out / "bounded" / "trajectory.csv").exists()


def test_roundtrip_report(tmp_path):
    spec = scenario(tmp_path, {"orbit": "random-bounded", "name": "rt"})
    assert main(["roundtrip", "--scenario", spec, "--out", str(tmp_path)]) == 0
    report = json.loads((tmp_path / "rt" / "report.json").read_text())
    assert report["status"] == "ok"
    assert report["max_rho_error"] < 1e-3 and report["max_time_error"] < 1e-3
    assert report["congruence_residual"] < 1e-2
    assert set(report["per_sample_root_case"]) == {"h_neg"}


def test_roundtrip_skips_exceptional_and_flags_truncation(tmp_path):
    out = str(tmp_path)
    assert main(["roundtrip", "--scenario", "lagrange-circular", "--out", out]) == 0
    report = json.loads((tmp_path / "lagrange-circular" / "report.json").read_text())
    assert report["status"] == "skipped" and report["reason"] == "exceptional"
    collapse = scenario(tmp_path, {"orbit": "homothetic-collapse", "name": "collapse",
                                   "integrator": {"horizon": 5.0, "collision_radius": 1e-3}})
    assert main(["roundtrip", "--scenario", collapse, "--out", out]) == 0
    report = json.loads((tmp_path / "collapse" / "report.json").read_text())
    assert report["truncated"] is True and report["status"] == "skipped"
    assert main(["simulate", "--scenario", collapse, "--out", out]) == 0
    diag = json.loads((tmp_path / "collapse" / "diagnostics.json").read_text())
    assert diag["truncated"] is True and "collision" in diag["truncation"]


def test_reconstruct_from_curve_file(tmp_path):
    out = tmp_path / "out"
    spec = scenario(tmp_path, {"orbit": "random-bounded", "name": "src"})
    assert main(["simulate", "--scenario", spec, "--out", str(out)]) == 0
    diag = json.loads((out / "src" / "diagnostics.json").read_text())
    curve = scenario(tmp_path, {"curve": str(out / "src" / "shape.csv"), "name": "rec",
                                "level": diag["level"],
                                "masses": [1 / 3, 1 / 3, 1 / 3]}, "curve.json")
    assert main(["reconstruct", "--scenario", curve, "--out", str(out)]) == 0
    rec, _ = read_table(out / "rec" / "trajectory.csv", ["t", "h", "Omega"])
    src, _ = read_table(out / "src" / "trajectory.csv", ["t"])
    assert rec["t"][-1] == pytest.approx(src["t"][-1], rel=1e-3)
    assert np.max(np.abs(rec["h"] - diag["level"]["h"])) < 1e-3
    rdiag = json.loads((out / "rec" / "diagnostics.json").read_text())
    assert rdiag["model"] == "full"


def test_plotdata_from_trajectory(tmp_path):
    out = tmp_path / "out"
    spec = bounded_file(tmp_path)
    assert main(["plotdata", "--scenario", spec, "--out", str(out)]) == 0
    path, _ = read_table(out / "bounded" / "shape_path.csv", ["t", "nx", "ny", "nz"])
    norm = np.sqrt(path["nx"] ** 2 + path["ny"] ** 2 + path["nz"] ** 2)
    assert np.max(np.abs(norm - 1)) < 1e-14
    traj, _ = read_table(out / "bounded" / "trajectory.csv", ["t", "I"])
    rho, _ = read_table(out / "bounded" / "rho.csv", ["t", "rho"])
    assert len(rho["t"]) == len(traj["t"]) == len(path["t"])
    assert np.allclose(rho["rho"], np.sqrt(traj["I"]), rtol=1e-15)
    resid, _ = read_table(out / "bounded" / "energy_residual.csv", ["energy_residual"])
    assert np.max(np.abs(resid["energy_residual"])) < 1e-9
    other = tmp_path / "other"
    assert main(["plotdata", "--trajectory", str(out / "bounded" / "trajectory.csv"),
                 "--out", str(other)]) == 0
    assert (other / "trajectory" / "shape_path.csv").read_bytes() == \
        (out / "bounded" / "shape_path.csv").read_bytes()


def test_plotdata_rejects_missing_columns(tmp_path):
    bad = tmp_path / "bad.csv"
    bad.write_text("t,x1,y1\n0,1,2\n")
    assert main(["plotdata", "--trajectory", str(bad), "--out", str(tmp_path)]) == 2
    with pytest.raises(SchemaError):
        read_table(bad, ["t", "h"])


def test_potential_grid(tmp_path):
    spec = scenario(tmp_path, {"orbit": "lagrange-circular", "name": "grid"})
    assert main(["potential-grid", "--scenario", spec, "--out", str(tmp_path),
                 "--grid", "7", "13"]) == 0
    grid, _ = read_table(tmp_path / "grid" / "potential_grid.csv", ["phi", "theta", "ustar"])
    assert len(grid["phi"]) == 7 * 13
    pole = grid["ustar"][grid["phi"] == 0.0]
    assert np.allclose(pole, USTAR_EQUILATERAL, rtol=1e-13)
    equator = grid["ustar"][np.isclose(grid["phi"], math.pi / 2)]
    assert np.all(equator >= USTAR_EQUILATERAL) and np.any(np.isinf(equator) | (equator > 1))


def test_parallel_jobs_match_serial(tmp_path):
    a = scenario(tmp_path, {"orbit": "random-bounded", "name": "one", "integrator": SHORT}, "a.json")
    b = scenario(tmp_path, {"orbit": "escape", "name": "two", "integrator": SHORT}, "b.json")
    assert main(["simulate", "--scenario", a, "--scenario", b, "--out", str(tmp_path / "s")]) == 0
    assert main(["simulate", "--scenario", a, "--scenario", b, "--out", str(tmp_path / "p"),
                 "--jobs", "2"]) == 0
    for name in ("one", "two"):
        assert (tmp_path / "s" / name / "trajectory.csv").read_bytes() == \
            (tmp_path / "p" / name / "trajectory.csv").read_bytes()


@pytest.mark.parametrize("obj", [
    {"orbit": "no-such-orbit"},
    {"orbit": "random-bounded", "triangle": {}},
    {"orbit": "random-bounded", "integrator": {"step": 1}},
    {"orbit": "random-bounded", "level": {"h": 3.0, "omega": 0.0}},
    {"orbit": "random-bounded", "potential": {"kind": "yukawa"}},
])
def test_configuration_errors_exit_2(tmp_path, obj):
    assert main(["simulate", "--scenario", scenario(tmp_path, obj), "--out", str(tmp_path)]) == 2


def test_malformed_json_exits_2(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{\"orbit\": ")
    assert main(["simulate", "--scenario", str(path), "--out", str(tmp_path)]) == 2
    assert main(["simulate", "--scenario", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path)]) == 2


def test_numerical_failure_exits_1(tmp_path):
    ang = np.linspace(0.1, 1.5, 60)
    rows = "\n".join(f"{a:.17g},{math.cos(a):.17g},{math.sin(a):.17g},0" for a in ang)
    curve = tmp_path / "arc.csv"
    curve.write_text("s,nx,ny,nz\n" + rows + "\n")
    spec = scenario(tmp_path, {"curve": str(curve), "level": {"h": -0.2, "omega": 0.1}})
    assert main(["reconstruct", "--scenario", spec, "--out", str(tmp_path)]) == 1


def test_module_entry_point(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "shapemech", "potential-grid", "--scenario",
                           "lagrange-circular", "--out", str(tmp_path), "--grid", "3", "4"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    summary = json.loads(proc.stdout.splitlines()[-1])
    assert summary["exit"] == 0 and summary["n_phi"] == 3
    bad = subprocess.run([sys.executable, "-m", "shapemech", "simulate", "--seed", "-1",
                          "--scenario", "escape"], capture_output=True, text=True)
    assert bad.returncode == 2
