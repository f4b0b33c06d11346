"""Fixed-step RK4 rollouts with per-step reprojection and invariant monitors."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np
from numpy.typing import NDArray

from .controller import AgatController, ReferenceSample
from .errors import AgatError, NonFiniteDerivative
from .manifold import EmbeddedManifold

Array = NDArray[np.float64]

DEFAULT_DT = 1e-3
LYAPUNOV_SLACK = 1e-6


def rk4_step(f: Callable[[float, Array], Array], t: float, y: Array, dt: float) -> Array:
    """Classical fourth-order Runge-Kutta step.

    Raises:
        NonFiniteDerivative: if any stage derivative contains inf or nan.
    """
    if not dt > 0:
        raise ValueError("dt must be positive")
    h = 0.5 * dt
    k1 = f(t, y)
    k2 = f(t + h, y + h * k1)
    k3 = f(t + h, y + h * k2)
    k4 = f(t + dt, y + dt * k3)
    y_new = y + (dt / 6.0) * (k1 + 2.0 * (k2 + k3) + k4)
    if not np.all(np.isfinite(y_new)):
        raise NonFiniteDerivative(f"non-finite state derivative near t={t:.6g}")
    return y_new


@dataclass(frozen=True)
class MechState:
    """``(q, v)`` in ambient coordinates at time ``t``."""

    q: Array
    v: Array
    t: float = 0.0


@dataclass(frozen=True)
class Monitors:
    e_cl: float
    constraint_residual: float
    energy: float
    effort: float


class ClosedLoop(Protocol):
    """What :func:`simulate` needs from a plant, reference and controller bundle."""

    columns: list[str]

    def derivative(self, t: float, y: Array) -> Array: ...

    def project(self, y: Array) -> Array: ...

    def observe(self, t: float, y: Array) -> Array: ...

    def monitors(self, row: Array) -> Monitors: ...


# -- references -------------------------------------------------------------

class Reference(ABC):
    """Reference trajectory, possibly carrying its own integrated state ``z``."""

    aux_dim: int = 0

    def initial(self) -> Array:
        return np.zeros(0)

    @abstractmethod
    def sample(self, t: float, z: Array) -> ReferenceSample: ...

    def derivative(self, t: float, z: Array) -> Array:
        return np.zeros(0)

    def project(self, z: Array) -> Array:
        return z

    def residual(self, t: float, z: Array) -> float:
        return 0.0


class AnalyticReference(Reference):
    """Reference given in closed form by position, velocity and acceleration."""

    def __init__(self, pos: Callable[[float], Array], vel: Callable[[float], Array],
                 acc: Callable[[float], Array], manifold: EmbeddedManifold | None = None):
        self.pos, self.vel, self.acc = pos, vel, acc
        self.manifold = manifold

    def sample(self, t, z):
        return ReferenceSample(self.pos(t), self.vel(t), self.acc(t))

    def residual(self, t, z):
        return self.manifold.residual(self.pos(t)) if self.manifold is not None else 0.0


class DummyReference(Reference):
    """Second copy of the plant driven by a constant ambient force ``u``.

    ``q_r'' = P(q_r) u - C(q_r, q_r')``; co-integrated with the plant so the
    reference acceleration is exact at every stage.
    """

    def __init__(self, manifold: EmbeddedManifold, q0: Array, v0: Array, u: Array):
        self.manifold = manifold
        self.q0 = np.asarray(q0, dtype=float)
        self.v0 = np.asarray(v0, dtype=float)
        self.u = np.asarray(u, dtype=float)
        self.m = manifold.ambient_dim
        self.aux_dim = 2 * self.m

    def initial(self):
        return np.concatenate((self.q0, self.v0))

    def _acc(self, q, v):
        return self.manifold.project_at(q, self.u) - self.manifold.correction(q, v)

    def sample(self, t, z):
        q, v = z[:self.m], z[self.m:]
        return ReferenceSample(q, v, self._acc(q, v))

    def derivative(self, t, z):
        q, v = z[:self.m], z[self.m:]
        return np.concatenate((v, self._acc(q, v)))

    def project(self, z):
        q = self.manifold.retract(z[:self.m]).x
        return np.concatenate((q, self.manifold.project_at(q, z[self.m:])))

    def residual(self, t, z):
        q, v = z[:self.m], z[self.m:]
        dv = v - self.manifold.project_at(q, v)
        return max(self.manifold.residual(q), float(np.sqrt(dv @ dv)))


class StaticReference(Reference):
    """Constant reference point with zero velocity."""

    def __init__(self, q: Array):
        self.q = np.asarray(q, dtype=float)
        self._zero = np.zeros_like(self.q)

    def sample(self, t, z):
        return ReferenceSample(self.q, self._zero, self._zero)


# -- embedded closed loop ----------------------------------------------------

class EmbeddedClosedLoop:
    """Plant ``q'' = u - C(q, q')`` on an embedded manifold under a controller.

    State layout: ``[q, v, z]`` with ``z`` the reference's own state.  With
    ``controller=None`` the plant is unforced (geodesic motion).
    """

    def __init__(self, manifold: EmbeddedManifold, reference: Reference,
                 controller: AgatController | None = None):
        self.manifold = manifold
        self.reference = reference
        self.controller = controller
        m = self.m = manifold.ambient_dim
        self._memo: tuple[float, bytes, Array] | None = None
        coords = [f"{c}{i}" for c in ("q", "qr", "v", "vr", "e") for i in range(m)]
        self.columns = (["t"] + coords + ["psi_e", "e_cl"]
                        + [f"u{i}" for i in range(m)] + ["u_norm", "residual"])

    def initial(self, q0: Array, v0: Array) -> Array:
        return np.concatenate((q0, v0, self.reference.initial()))

    def split(self, y: Array) -> tuple[Array, Array, Array]:
        m = self.m
        return y[:m], y[m:2 * m], y[2 * m:]

    def control(self, t: float, q: Array, v: Array, ref: ReferenceSample,
                correction: Array | None = None) -> Array:
        if self.controller is None:
            return np.zeros(self.m)
        return self.controller(q, v, ref, correction)

    def derivative(self, t, y):
        q, v, z = self.split(y)
        ref = self.reference.sample(t, z)
        C = self.manifold.correction(q, v)
        memo = self._memo
        if memo is not None and memo[0] == t and memo[1] == y.tobytes():
            u = memo[2]  # computed by observe() at this exact state
        else:
            u = self.control(t, q, v, ref, C)
        a = u - C
        return np.concatenate((v, a, self.reference.derivative(t, z)))

    def project(self, y):
        q, v, z = self.split(y)
        q = self.manifold.retract(q).x
        v = self.manifold.project_at(q, v)
        return np.concatenate((q, v, self.reference.project(z)))

    def observe(self, t, y):
        q, v, z = self.split(y)
        ref = self.reference.sample(t, z)
        if self.controller is not None:
            u, e, _, e_cl = self.controller.evaluate(q, v, ref)
            psi = self.controller.nav.value_at(e)
            self._memo = (t, y.tobytes(), u)
        else:
            u = np.zeros(self.m)
            e, psi, e_cl = np.full(self.m, np.nan), np.nan, np.nan
        M = self.manifold
        dv = v - M.project_at(q, v)
        residual = max(M.residual(q), float(np.sqrt(dv @ dv)), self.reference.residual(t, z))
        u_norm = float(np.sqrt(u @ u))
        return np.concatenate(([t], q, ref.q, v, ref.v, e, [psi, e_cl], u, [u_norm, residual]))

    def monitors(self, row: Array) -> Monitors:
        m = self.m
        v = row[1 + 2 * m:1 + 3 * m]
        return Monitors(e_cl=float(row[-m - 3]), constraint_residual=float(row[-1]),
                        energy=0.5 * float(v @ v), effort=float(row[-2]))


def step_and_project(system: ClosedLoop, t: float, y: Array, dt: float
                     ) -> tuple[Array, Monitors]:
    """One RK4 step followed by reprojection; monitors are evaluated post-step."""
    y_new = system.project(rk4_step(system.derivative, t, y, dt))
    return y_new, system.monitors(system.observe(t + dt, y_new))


# -- logging -------------------------------------------------------------------

@dataclass
class TrajectoryLog:
    """Row-per-step record of a rollout; ``status`` is ``"ok"`` or ``"aborted"``."""

    columns: list[str]
    data: Array
    dt: float
    status: str = "ok"
    message: str = ""
    lyapunov_violations: int = 0
    max_lyapunov_increase: float = float("-inf")
    extras: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.data.shape[0]

    def column(self, name: str) -> Array:
        return self.data[:, self.columns.index(name)]

    def block(self, prefix: str) -> Array:
        idx = [i for i, c in enumerate(self.columns)
               if c.startswith(prefix) and c[len(prefix):].isdigit()]
        return self.data[:, idx]

    @property
    def t(self) -> Array:
        return self.data[:, 0]

    @property
    def final_state(self) -> Array | None:
        return self.extras.get("final_state")


def simulate(system: ClosedLoop, y0: Array, duration: float, dt: float = DEFAULT_DT,
             t0: float = 0.0) -> TrajectoryLog:
    """Integrate ``system`` from ``y0`` for ``duration`` seconds at step ``dt``.

    Controller and integration failures (any :class:`AgatError`) end the run
    with ``status="aborted"``; rows logged up to that point are kept.
    """
    if duration < 0:
        raise ValueError("duration must be non-negative")
    if not dt > 0:
        raise ValueError("dt must be positive")
    n_steps = int(round(duration / dt))
    y = np.asarray(y0, dtype=float)
    rows = []
    log = TrajectoryLog(list(system.columns), np.empty((0, len(system.columns))), dt)
    ecl_idx = log.columns.index("e_cl")
    try:
        rows.append(system.observe(t0, y))
        for k in range(n_steps):
            t = t0 + k * dt
            y = system.project(rk4_step(system.derivative, t, y, dt))
            row = system.observe(t0 + (k + 1) * dt, y)
            inc = row[ecl_idx] - rows[-1][ecl_idx]
            if inc > log.max_lyapunov_increase:
                log.max_lyapunov_increase = float(inc)
            if inc > LYAPUNOV_SLACK * dt:
                log.lyapunov_violations += 1
            rows.append(row)
    except AgatError as exc:
        log.status = "aborted"
        log.message = f"{type(exc).__name__}: {exc}"
    if rows:
        log.data = np.vstack(rows)
    log.extras["final_state"] = y
    return log
