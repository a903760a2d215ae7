"""Named orbits and scenario files.

A scenario is a JSON object::

    {
      "name": "demo",
      "seed": 7,
      "orbit": "random-bounded",            # or "triangle", "moduli", "curve"
      "potential": {"kind": "newton", "e": 1},
      "level": {"h": -0.3, "omega": 0.2, "e": 1},
      "integrator": {"horizon": 10, "sample_interval": 0.01},
      "reconstruction": {"samples": 2048},
      "outputs": ["trajectory", "moduli", "shape"]
    }

Exactly one initial-condition key must be present.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ScenarioError, SchemaError
from .integrator import IntegratorConfig
from .kinematics import MTriangle, kinematic_quantities
from .moduli import EnergyMomentum, ModuliState, state_energy_residual
from .potential import HomogeneousPotential, from_spec, newton

EQUAL = (1 / 3, 1 / 3, 1 / 3)
DEFAULT_SEED = 20240601
LEVEL_TOL = 1e-6

# random-bounded: hierarchical triple, inner binary (1, 2), outer body 3
INNER_SEPARATION = (0.8, 1.2)
INNER_ECCENTRICITY = 0.2
OUTER_DISTANCE = (3.0, 3.6)

_IC_KEYS = ("orbit", "triangle", "moduli", "curve")


def _rot(angle: float) -> np.ndarray:
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def _perp(v):
    return np.array([-v[1], v[0]])


def lagrange_circular(masses=EQUAL, side: float = 1.0) -> MTriangle:
    """Equilateral triangle in rigid rotation at its circular rate (unit rate for side 1, equal masses)."""
    m = np.asarray(masses, dtype=float)
    ang = math.pi / 2 + np.arange(3) * 2 * math.pi / 3
    pos = side / math.sqrt(3) * np.stack([np.cos(ang), np.sin(ang)], 1)
    pos = pos - m @ pos
    rate = math.sqrt(float(np.sum(m)) / side ** 3)
    vel = rate * np.array([_perp(p) for p in pos])
    return MTriangle(m, pos, vel)


def euler_collinear(spacing: float = 1.0) -> MTriangle:
    """Equal masses on a line, middle body at the center, rigidly rotating."""
    pos = np.array([[spacing, 0.0], [0.0, 0.0], [-spacing, 0.0]])
    rate = math.sqrt(5.0 / 12.0 / spacing ** 3)
    vel = rate * np.array([_perp(p) for p in pos])
    return MTriangle(EQUAL, pos, vel)


def homothetic_collapse(side: float = 1.0) -> MTriangle:
    tri = lagrange_circular(EQUAL, side)
    return MTriangle(tri.masses, tri.positions, np.zeros((3, 2)))


def collinear_oscillation() -> MTriangle:
    """Non-rotating equal-mass collinear start with radial velocities only."""
    pos = np.array([[1.3, 0.0], [-0.2, 0.0], [-1.1, 0.0]])
    vel = np.array([[-0.1, 0.0], [0.25, 0.0], [-0.15, 0.0]])
    return MTriangle(EQUAL, pos, vel)


def random_bounded(seed: int = DEFAULT_SEED) -> MTriangle:
    """Seeded equal-mass hierarchical triple with prograde, nearly circular orbits.

    The inner binary (bodies 1, 2) starts at an apsis with separation drawn
    from ``INNER_SEPARATION`` and eccentricity below ``INNER_ECCENTRICITY``;
    body 3 orbits the binary at a distance drawn from ``OUTER_DISTANCE`` with
    a near-circular speed.  Both angular momenta are positive.
    """
    rng = np.random.default_rng(seed)
    m1, m2, m3 = EQUAL
    mb = m1 + m2
    r = rng.uniform(*INNER_SEPARATION)
    ecc = rng.uniform(0.0, INNER_ECCENTRICITY)
    pericenter = rng.random() < 0.5
    speed_in = math.sqrt(mb * ((1 + ecc) if pericenter else (1 - ecc)) / r)
    phase_in = rng.uniform(0, 2 * math.pi)
    d = _rot(phase_in) @ np.array([r, 0.0])
    dv = _rot(phase_in) @ np.array([0.0, speed_in])
    big_r = rng.uniform(*OUTER_DISTANCE)
    phase_out = rng.uniform(0, 2 * math.pi)
    speed_out = math.sqrt(1.0 / big_r) * rng.uniform(0.97, 1.03)
    rel = _rot(phase_out) @ np.array([big_r, 0.0])
    rel_v = _rot(phase_out) @ np.array([0.0, speed_out])
    pos = np.array([-m2 / mb * d, m1 / mb * d, rel])
    vel = np.array([-m2 / mb * dv, m1 / mb * dv, rel_v])
    pos[:2] -= m3 * rel
    vel[:2] -= m3 * rel_v
    pos[2] -= m3 * rel
    vel[2] -= m3 * rel_v
    return MTriangle(EQUAL, pos, vel)


def escape_triangle(seed: int = DEFAULT_SEED) -> MTriangle:
    """A random-bounded triple whose outer body is kicked to positive energy."""
    tri = random_bounded(seed)
    vel = np.array(tri.velocities)
    vel[2] *= 2.2
    vel[:2] -= (vel[2] - tri.velocities[2]) * (1 / 3) / (2 / 3)
    return MTriangle(tri.masses, tri.positions, vel)


def zero_energy_triangle(seed: int = DEFAULT_SEED, pot: HomogeneousPotential | None = None
                         ) -> MTriangle:
    """Velocities of ``random_bounded(seed)`` rescaled so that ``T = U``."""
    tri = random_bounded(seed)
    pot = pot or newton(tri.masses)
    _, kin, _ = kinematic_quantities(tri)
    u = float(pot.value(tri.positions))
    return MTriangle(tri.masses, tri.positions, np.asarray(tri.velocities) * math.sqrt(u / kin))


def inverse_square_rotating(seed: int = DEFAULT_SEED) -> MTriangle:
    """Spinning, slowly expanding near-equilateral start for the e = 2 potential.

    Equal masses with ``U = sum m_i m_j / r_ij^2``.  The equilateral triangle
    balances at rotation rate ``sqrt(2)``; the start spins a little faster
    (so ``h > 0`` and the pairs do not fall together over a few time units)
    and carries seeded deformations of size about 5 percent.  With ``e = 2``
    the moment of inertia is quadratic in time, so no motion of this
    potential stays bounded.
    """
    rng = np.random.default_rng(seed)
    base = lagrange_circular(EQUAL, 1.0)
    pos = np.asarray(base.positions) * (1 + 0.05 * rng.standard_normal((3, 2)))
    vel = math.sqrt(2.0) * np.array([_perp(p) for p in pos]) * rng.uniform(1.08, 1.15)
    vel = vel + 0.03 * rng.standard_normal((3, 2))
    return MTriangle(EQUAL, pos, vel)


NAMED_ORBITS = {
    "lagrange-circular": lambda seed: lagrange_circular(),
    "euler-collinear": lambda seed: euler_collinear(),
    "homothetic-collapse": lambda seed: homothetic_collapse(),
    "collinear-oscillation": lambda seed: collinear_oscillation(),
    "random-bounded": random_bounded,
    "escape": escape_triangle,
    "zero-energy": zero_energy_triangle,
    "inverse-square-rotating": inverse_square_rotating,
}

DEFAULT_POTENTIAL = {"inverse-square-rotating": {"kind": "inverse-square", "e": 2}}


def named_orbit(name: str, seed: int = DEFAULT_SEED) -> MTriangle:
    try:
        return NAMED_ORBITS[name](seed)
    except KeyError:
        raise ScenarioError(f"unknown named orbit {name!r}; known: {sorted(NAMED_ORBITS)}") \
            from None


@dataclass
class Scenario:
    name: str
    kind: str
    seed: int = DEFAULT_SEED
    triangle: MTriangle | None = None
    moduli: ModuliState | None = None
    curve_path: Path | None = None
    potential: dict = field(default_factory=lambda: {"kind": "newton", "e": 1})
    level: EnergyMomentum | None = None
    integrator: IntegratorConfig = field(default_factory=IntegratorConfig)
    reconstruction: dict = field(default_factory=dict)
    outputs: list = field(default_factory=lambda: ["trajectory", "moduli", "shape"])
    masses: tuple = EQUAL

    def build_potential(self) -> HomogeneousPotential:
        masses = self.triangle.masses if self.triangle is not None else self.masses
        return from_spec(self.potential, masses)

    def with_seed(self, seed: int) -> "Scenario":
        if self.kind == "orbit":
            return replace(self, seed=seed, triangle=named_orbit(self.name_of_orbit, seed))
        return replace(self, seed=seed)

    name_of_orbit: str | None = None


def _level_from(obj) -> EnergyMomentum:
    try:
        return EnergyMomentum.from_json(obj)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaError(f"malformed level: {exc}") from exc


def parse_scenario(obj: dict, base_dir: Path | None = None, seed: int | None = None) -> Scenario:
    """Validate a scenario dictionary and build its initial condition."""
    if not isinstance(obj, dict):
        raise SchemaError("scenario must be a JSON object")
    present = [k for k in _IC_KEYS if k in obj]
    if len(present) != 1:
        raise ScenarioError(f"exactly one initial condition among {_IC_KEYS} is required, "
                            f"got {present}")
    kind = present[0]
    seed = int(obj.get("seed", DEFAULT_SEED) if seed is None else seed)
    if not 0 <= seed < 2 ** 64:
        raise ScenarioError("seed must be an unsigned 64-bit integer")
    try:
        cfg = IntegratorConfig.from_json(obj.get("integrator"))
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"malformed integrator config: {exc}") from exc
    sc = Scenario(name=str(obj.get("name", obj.get(kind) if kind == "orbit" else kind)),
                  kind=kind, seed=seed, integrator=cfg,
                  reconstruction=dict(obj.get("reconstruction", {})),
                  outputs=list(obj.get("outputs", ["trajectory", "moduli", "shape"])))
    if kind == "orbit":
        sc.name_of_orbit = str(obj["orbit"])
        sc.triangle = named_orbit(sc.name_of_orbit, seed)
        sc.potential = dict(obj.get("potential", DEFAULT_POTENTIAL.get(sc.name_of_orbit,
                                                                         sc.potential)))
    elif kind == "triangle":
        sc.triangle = MTriangle.from_json(obj["triangle"])
        sc.potential = dict(obj.get("potential", sc.potential))
    else:
        sc.potential = dict(obj.get("potential", sc.potential))
        sc.masses = tuple(obj.get("masses", EQUAL))
    if "level" in obj:
        sc.level = _level_from(obj["level"])
    if kind == "moduli":
        if sc.level is None:
            raise ScenarioError("a moduli initial condition needs a level")
        m = obj["moduli"]
        try:
            sc.moduli = ModuliState(float(m["rho"]), float(m["rhodot"]), m["n"], m["ndot"],
                                    sc.level)
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"malformed moduli state: {exc}") from exc
    if kind == "curve":
        path = Path(obj["curve"])
        if base_dir is not None and not path.is_absolute():
            path = base_dir / path
        if not path.exists():
            raise ScenarioError(f"curve file {path} does not exist")
        sc.curve_path = path
        if sc.level is None:
            raise ScenarioError("a curve initial condition needs a level")
    if sc.level is not None:
        _check_level(sc)
    return sc


def _check_level(sc: Scenario):
    pot = sc.build_potential()
    if sc.level.e != pot.exponent:
        raise ScenarioError("level exponent differs from the potential's")
    if sc.triangle is not None and sc.triangle.has_velocities:
        _, kin, om = kinematic_quantities(sc.triangle)
        h = kin - float(pot.value(sc.triangle.positions))
        if abs(h - sc.level.h) > LEVEL_TOL or abs(abs(om) - sc.level.omega) > LEVEL_TOL:
            raise ScenarioError(f"level (h={sc.level.h}, omega={sc.level.omega}) does not match "
                                f"the triangle (h={h:.9g}, omega={abs(om):.9g})")
    if sc.moduli is not None and abs(state_energy_residual(sc.moduli, pot)) > LEVEL_TOL:
        raise ScenarioError("moduli state violates the energy integral of its level")


def load_scenario(path, seed: int | None = None) -> Scenario:
    path = Path(path)
    try:
        obj = json.loads(path.read_text())
    except FileNotFoundError:
        raise ScenarioError(f"scenario file {path} not found") from None
    except json.JSONDecodeError as exc:
        raise SchemaError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: "
                          f"{exc.msg}") from exc
    return parse_scenario(obj, path.parent, seed)


def level_of(tri: MTriangle, pot: HomogeneousPotential) -> EnergyMomentum:
    """The energy-momentum level of a triangle with velocities."""
    _, kin, om = kinematic_quantities(tri)
    return EnergyMomentum(kin - float(pot.value(tri.positions)), abs(om), pot.exponent)


def without_rotation(tri: MTriangle, scale: float = 1.0) -> MTriangle:
    """Remove the rigid-rotation part of the velocities, then scale them.

    The result has zero angular momentum, the case in which the reduced
    equations lose their gyroscopic coupling.
    """
    inertia, _, om = kinematic_quantities(tri)
    a = np.asarray(tri.positions)
    v = np.asarray(tri.velocities) - (om / inertia) * np.stack([-a[:, 1], a[:, 0]], axis=1)
    return MTriangle(tri.masses, a, scale * v)
