"""Built-in experiment presets, scenario files and construction of runnable systems.

Scenario files are JSON documents whose keys mirror :class:`ScenarioConfig`;
:func:`preset` returns the built-in experiments and :func:`save_config` /
:func:`load_config` convert between the two.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Callable, Literal

import numpy as np
from numpy.typing import NDArray

from .controller import AgatController, Gains
from .errormap import LissajousErrorMap, SphereErrorMap
from .errors import InfeasibleInitialCondition, UnknownPreset
from .integrator import AnalyticReference, DummyReference, EmbeddedClosedLoop, Reference
from .manifold import (EmbeddedManifold, Lissajous, Sphere, lissajous_curve,
                       lissajous_curve_ddot, lissajous_curve_dot)
from .navigation import lissajous_height, sphere_height
from .so3 import (FreeBodyReference, Inertia, RigidBodyClosedLoop, So3Gains,
                  polar_orthonormalize, rotation_residual)

Array = NDArray[np.float64]

System = Literal["sphere", "lissajous", "rigid_body"]
RepairMode = Literal["strict", "project"]

FEASIBILITY_TOL = 1e-9
ROTATION_FEASIBILITY_TOL = 1e-8
CURVE_SAMPLES = 1000

RIGID_BODY_INERTIA = [[4.0, 1.0, 1.0], [1.0, 5.2, 2.0], [1.0, 2.0, 6.3]]


@dataclass
class ReferenceConfig:
    """Reference trajectory: a dummy copy of the plant or a closed-form curve.

    ``kind="dummy_system"`` uses ``q0, v0`` and the constant force ``u``;
    ``kind="free_body"`` uses ``q0`` (rotation), ``v0`` (body momentum) and
    ``inertia``; ``kind="analytic_curve"`` uses ``curve``.
    """

    kind: Literal["dummy_system", "analytic_curve", "free_body"]
    q0: list | None = None
    v0: list | None = None
    u: list | None = None
    curve: str | None = None
    inertia: list | None = None


@dataclass
class GainsConfig:
    """Scalar ``k_p`` with ``k_d`` for embedded systems, or ``P, K_d`` on SO(3)."""

    k_p: float
    k_d: float | list | None = None
    P: list | None = None
    K_d: list | None = None


@dataclass
class ScenarioConfig:
    """Complete description of one closed-loop run.

    For ``system="rigid_body"``, ``q0`` is the initial rotation matrix and
    ``v0`` the initial body angular momentum ``I Omega(0)``.
    """

    name: str
    system: System
    q0: list
    v0: list
    reference: ReferenceConfig
    gains: GainsConfig
    duration: float
    dt: float = 1e-3
    ic_repair: RepairMode = "project"
    inertia: list | None = None
    controller: Literal["agat", "pdff"] = "agat"
    notes: str = ""

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> ScenarioConfig:
        """Build from a parsed scenario document; unknown or missing keys are errors."""
        data = dict(data)
        ref = _build_dataclass(ReferenceConfig, data.pop("reference", None), "reference")
        gains = _build_dataclass(GainsConfig, data.pop("gains", None), "gains")
        cfg = _build_dataclass(cls, {**data, "reference": ref, "gains": gains}, "scenario")
        cfg.validate()
        return cfg

    def validate(self) -> None:
        """Raise ``ValueError`` for structurally invalid configurations."""
        if self.system not in ("sphere", "lissajous", "rigid_body"):
            raise ValueError(f"unknown system {self.system!r}")
        if self.ic_repair not in ("strict", "project"):
            raise ValueError(f"unknown ic_repair {self.ic_repair!r}")
        if self.controller not in ("agat", "pdff"):
            raise ValueError(f"unknown controller {self.controller!r}")
        if self.controller == "pdff" and self.system != "rigid_body":
            raise ValueError("the pdff controller exists only for rigid_body")
        if not (math.isfinite(self.duration) and self.duration >= 0):
            raise ValueError("duration must be finite and non-negative")
        if not (math.isfinite(self.dt) and self.dt > 0):
            raise ValueError("dt must be positive")
        rigid = self.system == "rigid_body"
        _check_shape("q0", self.q0, (3, 3) if rigid else (3,))
        _check_shape("v0", self.v0, (3,))
        ref = self.reference
        if rigid:
            if ref.kind != "free_body":
                raise ValueError("rigid_body scenarios need a free_body reference")
            _check_shape("reference.q0", ref.q0, (3, 3))
            _check_shape("reference.v0", ref.v0, (3,))
            _check_shape("reference.inertia", ref.inertia, (3, 3))
            _check_shape("inertia", self.inertia, (3, 3))
            if self.gains.P is None or self.gains.K_d is None:
                raise ValueError("rigid_body gains need P and K_d")
        elif ref.kind == "dummy_system":
            for key in ("q0", "v0", "u"):
                _check_shape(f"reference.{key}", getattr(ref, key), (3,))
        elif ref.kind == "analytic_curve":
            if ref.curve not in CURVES:
                raise ValueError(f"unknown curve {ref.curve!r}; known: {sorted(CURVES)}")
        else:
            raise ValueError(f"reference kind {ref.kind!r} does not fit system {self.system!r}")
        if not rigid and self.gains.k_d is None:
            raise ValueError("embedded-system gains need k_d")


def _build_dataclass(cls, data, where: str):
    if not isinstance(data, dict):
        raise ValueError(f"{where}: expected a mapping")
    names = {f.name for f in fields(cls)}
    unknown = set(data) - names
    if unknown:
        raise ValueError(f"{where}: unknown keys {sorted(unknown)}")
    try:
        return cls(**data)
    except TypeError as exc:
        raise ValueError(f"{where}: {exc}") from None


def _check_shape(name: str, value, shape: tuple[int, ...]) -> None:
    if value is None:
        raise ValueError(f"{name} is required")
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ValueError(f"{name} must be numeric") from None
    if arr.shape != shape:
        raise ValueError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must be finite")


def save_config(config: ScenarioConfig, path: str | Path) -> None:
    Path(path).write_text(json.dumps(config.to_dict(), indent=2) + "\n")


def load_config(path: str | Path) -> ScenarioConfig:
    """Read a scenario document.

    Raises:
        OSError: if the file cannot be read.
        ValueError: if it is not valid JSON or not a valid scenario.
    """
    text = Path(path).read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"{path}: invalid JSON ({exc})") from None
    return ScenarioConfig.from_dict(data)


# -- presets -------------------------------------------------------------------

_S2 = 1.0 / math.sqrt(2.0)
_S3 = 1.0 / math.sqrt(3.0)


def _sphere1() -> ScenarioConfig:
    return ScenarioConfig(
        name="sphere1", system="sphere", q0=[-1.0, 0.0, 0.0], v0=[0.0, 1.0, 0.0],
        reference=ReferenceConfig("dummy_system", q0=[_S2, 0.0, _S2], v0=[3.0, 0.0, -3.0],
                                  u=[1.0, 2.0, -1.0]),
        gains=GainsConfig(k_p=3.7, k_d=-4.0), duration=15.0)


def _sphere2() -> ScenarioConfig:
    return ScenarioConfig(
        name="sphere2", system="sphere", q0=[0.0, -1.0, 0.0], v0=[1.0, 2.0, 2.0],
        reference=ReferenceConfig("dummy_system", q0=[_S3, _S3, _S3], v0=[3.0, 0.0, -3.0],
                                  u=[1.0, 2.0, 1.0]),
        gains=GainsConfig(k_p=4.0, k_d=-5.7), duration=15.0,
        notes="printed v0 is not tangent at q0; projected")


def _lissajous1() -> ScenarioConfig:
    return ScenarioConfig(
        name="lissajous1", system="lissajous", q0=[-0.82, 0.9386, 0.9672],
        v0=[-1.197, 1.1346, 2.0798],
        reference=ReferenceConfig("analytic_curve", curve="lissajous1"),
        gains=GainsConfig(k_p=5.4, k_d=-1.2), duration=20.0,
        notes="printed q0 is off the curve; retracted, v0 projected")


def _lissajous2() -> ScenarioConfig:
    return ScenarioConfig(
        name="lissajous2", system="lissajous", q0=[0.54, 0.9093, 0.1411],
        v0=[-0.8415, -0.8323, -2.97],
        reference=ReferenceConfig("analytic_curve", curve="lissajous2"),
        gains=GainsConfig(k_p=5.3, k_d=-1.6), duration=20.0)


def _rigid_body(name: str, R0: list) -> ScenarioConfig:
    return ScenarioConfig(
        name=name, system="rigid_body", q0=R0, v0=[1.0, 2.2, 5.1],
        reference=ReferenceConfig("free_body", q0=np.eye(3).tolist(), v0=[-0.8, -0.3, -0.5],
                                  inertia=np.diag([1.0, 1.2, 2.0]).tolist()),
        gains=GainsConfig(k_p=1.0, P=np.diag([4.0, 4.5, 4.2]).tolist(),
                          K_d=(-np.diag([3.5, 3.5, 3.7])).tolist()),
        duration=20.0, inertia=[row[:] for row in RIGID_BODY_INERTIA])


def _so3_compare() -> ScenarioConfig:
    return _rigid_body("so3_compare", [[0.36, 0.48, -0.8], [-0.8, 0.6, 0.0],
                                       [0.48, 0.64, 0.6]])


def _so3_compare_ii() -> ScenarioConfig:
    cfg = _rigid_body("so3_compare_ii", [[0.7071, 0.7071, 0.0], [-0.7071, 0.7071, 0.0],
                                         [0.0, 0.0, 1.0]])
    cfg.notes = "printed R0 is rounded to 4 digits; replaced by its polar factor"
    return cfg


PRESETS: dict[str, Callable[[], ScenarioConfig]] = {
    "sphere1": _sphere1,
    "sphere2": _sphere2,
    "lissajous1": _lissajous1,
    "lissajous2": _lissajous2,
    "so3_compare": _so3_compare,
    "so3_compare_ii": _so3_compare_ii,
}


def preset(name: str) -> ScenarioConfig:
    """Fresh copy of a built-in scenario.

    Raises:
        UnknownPreset: if ``name`` is not in :data:`PRESETS`.
    """
    try:
        return PRESETS[name]()
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; known: {sorted(PRESETS)}") from None


def random_sphere(seed: int, base: str = "sphere1", speed: float = 1.0,
                  min_margin: float = 1e-3) -> ScenarioConfig:
    """``base`` with a random initial state on S^2.

    ``q0`` is uniform on the sphere and ``v0`` a Gaussian tangent vector scaled
    by ``speed``.  Draws whose pair with the reference start lies within
    ``min_margin`` of the error map's singular set (``|<q0, q_r0>| = 1``) are
    rejected and redrawn.
    """
    cfg = preset(base)
    if cfg.system != "sphere":
        raise ValueError("random_sphere needs a sphere preset as base")
    rng = np.random.default_rng(seed)
    qr = np.asarray(cfg.reference.q0, dtype=float)
    qr = qr / np.linalg.norm(qr)
    while True:
        q = rng.standard_normal(3)
        q /= np.linalg.norm(q)
        if 1.0 - abs(float(q @ qr)) > min_margin:
            break
    v = rng.standard_normal(3)
    v = speed * (v - (v @ q) * q)
    return replace(cfg, name=f"{base}_random_{seed}", q0=q.tolist(), v0=v.tolist(),
                   notes=f"random initial state, seed {seed}")


def antipodal_sphere(base: str = "sphere1") -> ScenarioConfig:
    """``base`` started at the error map's maximum with zero error velocity.

    ``q0 = -q_r0`` and ``v0 = -v_r0`` keep ``<q, q_r> = -1`` to first order, the
    excluded set where no smooth error map on S^2 can be differentiated.
    """
    cfg = preset(base)
    qr = np.asarray(cfg.reference.q0, dtype=float)
    vr = np.asarray(cfg.reference.v0, dtype=float)
    return replace(cfg, name=f"{base}_antipodal", q0=(-qr).tolist(), v0=(-vr).tolist(),
                   notes="antipodal start: outside the basin by construction")


# -- reference curves ------------------------------------------------------------

def _warped_curve() -> AnalyticReference:
    # gamma(sin t): velocity and acceleration by the chain rule
    def pos(t):
        return lissajous_curve(math.sin(t))

    def vel(t):
        return lissajous_curve_dot(math.sin(t)) * math.cos(t)

    def acc(t):
        s, c = math.sin(t), math.cos(t)
        return lissajous_curve_ddot(s) * (c * c) - lissajous_curve_dot(s) * s

    return AnalyticReference(pos, vel, acc)


def _plain_curve() -> AnalyticReference:
    return AnalyticReference(lissajous_curve, lissajous_curve_dot, lissajous_curve_ddot)


CURVES: dict[str, Callable[[], AnalyticReference]] = {
    "lissajous1": _warped_curve,
    "lissajous2": _plain_curve,
}


# -- feasibility and construction ---------------------------------------------------

@dataclass
class ResidualEntry:
    """Constraint residual of one piece of initial data before and after repair."""

    item: str
    before: float
    after: float
    repaired: bool
    tol: float = FEASIBILITY_TOL


@dataclass
class FeasibilityReport:
    entries: list[ResidualEntry] = field(default_factory=list)
    reference_residual: float = 0.0
    max_reference_speed: float = 0.0

    @property
    def repairs(self) -> list[ResidualEntry]:
        return [e for e in self.entries if e.repaired]

    @property
    def ok(self) -> bool:
        return (all(e.after <= e.tol for e in self.entries)
                and self.reference_residual <= FEASIBILITY_TOL)

    def describe(self) -> list[str]:
        return [f"{e.item}: residual {e.before:.3e} -> {e.after:.3e}"
                for e in self.repairs]


def _manifold(system: System) -> EmbeddedManifold:
    return Sphere() if system == "sphere" else Lissajous()


def _repair_state(M: EmbeddedManifold, label: str, q, v, entries: list[ResidualEntry]
                  ) -> tuple[Array, Array]:
    q = np.asarray(q, dtype=float)
    v = np.asarray(v, dtype=float)
    rq = M.residual(q)
    q_new = M.retract(q).x if rq > FEASIBILITY_TOL else q
    entries.append(ResidualEntry(f"{label} position", rq, M.residual(q_new),
                                 rq > FEASIBILITY_TOL))
    rv_before = float(np.linalg.norm(v - M.project_at(q_new, v)))
    v_new = M.project_at(q_new, v) if rv_before > FEASIBILITY_TOL else v
    rv_after = float(np.linalg.norm(v_new - M.project_at(q_new, v_new)))
    entries.append(ResidualEntry(f"{label} velocity", rv_before, rv_after,
                                 rv_before > FEASIBILITY_TOL))
    return q_new, v_new


def _repair_rotation(label: str, R, entries: list[ResidualEntry]) -> Array:
    R = np.asarray(R, dtype=float)
    r = rotation_residual(R)
    bad = r > ROTATION_FEASIBILITY_TOL or np.linalg.det(R) <= 0
    R_new = polar_orthonormalize(R) if bad else R
    entries.append(ResidualEntry(f"{label} rotation", r, rotation_residual(R_new), bad,
                                 ROTATION_FEASIBILITY_TOL))
    return R_new


@dataclass
class PreparedRun:
    """Runnable closed loop plus its initial state and feasibility report."""

    config: ScenarioConfig
    system: EmbeddedClosedLoop | RigidBodyClosedLoop
    y0: Array
    report: FeasibilityReport


def verify_feasibility(config: ScenarioConfig) -> FeasibilityReport:
    """Residuals of all initial data before and after the ``project`` repair."""
    return _prepare(config)[2]


def _prepare(config: ScenarioConfig) -> tuple[EmbeddedManifold | None, tuple, FeasibilityReport]:
    # manifold is None for rigid-body scenarios
    config.validate()
    report = FeasibilityReport()
    ref_cfg = config.reference
    if config.system == "rigid_body":
        R0 = _repair_rotation("initial", config.q0, report.entries)
        Rr0 = _repair_rotation("reference", ref_cfg.q0, report.entries)
        ref_inertia = Inertia(np.asarray(ref_cfg.inertia, dtype=float))
        omega_r0 = ref_inertia.inverse @ np.asarray(ref_cfg.v0, dtype=float)
        report.max_reference_speed = float(np.linalg.norm(omega_r0))
        return None, (R0, Rr0, ref_inertia, omega_r0), report
    M = _manifold(config.system)
    q0, v0 = _repair_state(M, "initial", config.q0, config.v0, report.entries)
    if ref_cfg.kind == "dummy_system":
        qr0, vr0 = _repair_state(M, "reference", ref_cfg.q0, ref_cfg.v0, report.entries)
        ref: Reference = DummyReference(M, qr0, vr0, np.asarray(ref_cfg.u, dtype=float))
        report.max_reference_speed = float(np.linalg.norm(vr0))
    else:
        curve = CURVES[ref_cfg.curve]()
        curve.manifold = M
        ts = np.linspace(0.0, max(config.duration, 0.0), CURVE_SAMPLES)
        report.reference_residual = max(M.residual(curve.pos(t)) for t in ts)
        report.max_reference_speed = max(float(np.linalg.norm(curve.vel(t))) for t in ts)
        ref = curve
    return M, (q0, v0, ref), report


def prepare(config: ScenarioConfig) -> PreparedRun:
    """Repair initial data as configured and assemble the closed loop.

    Raises:
        InfeasibleInitialCondition: in strict mode, if any initial datum
            violates its constraint.
        ValueError: if the configuration is structurally invalid.
    """
    M, data, report = _prepare(config)
    if config.ic_repair == "strict" and report.repairs:
        raise InfeasibleInitialCondition("strict mode rejects initial data needing repair: "
                                         + "; ".join(report.describe()))
    g = config.gains
    if M is None:
        R0, Rr0, ref_inertia, omega_r0 = data
        inertia = Inertia(np.asarray(config.inertia, dtype=float))
        gains = So3Gains(np.asarray(g.P, dtype=float), np.asarray(g.K_d, dtype=float),
                         float(g.k_p))
        ref = FreeBodyReference(ref_inertia, Rr0, omega_r0)
        system = RigidBodyClosedLoop(inertia, gains, ref, config.controller)
        omega0 = inertia.inverse @ np.asarray(config.v0, dtype=float)
        return PreparedRun(config, system, system.initial(R0, omega0), report)
    q0, v0, ref = data
    k_d = g.k_d if np.isscalar(g.k_d) else np.asarray(g.k_d, dtype=float)
    if config.system == "sphere":
        nav, emap = sphere_height(M), SphereErrorMap(M)
    else:
        nav, emap = lissajous_height(M), LissajousErrorMap(M)
    controller = AgatController(nav, emap, Gains(float(g.k_p), k_d))
    system = EmbeddedClosedLoop(M, ref, controller)
    return PreparedRun(config, system, system.initial(q0, v0), report)


__all__ = [
    "ReferenceConfig", "GainsConfig", "ScenarioConfig", "save_config", "load_config",
    "PRESETS", "preset", "random_sphere", "antipodal_sphere", "CURVES", "ResidualEntry",
    "FeasibilityReport", "verify_feasibility", "PreparedRun", "prepare",
]
