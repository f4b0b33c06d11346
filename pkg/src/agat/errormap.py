"""Configuration error maps ``E: M x M -> M`` and their derivative jets.

Both concrete maps factor through the cosine of the angle between the two
position vectors,

    kappa(q1, q2) = <q1, q2> / (|q1| |q2|),   beta = sqrt(1 - kappa^2),

as ``E = F(kappa)`` for a curve ``F`` on the manifold.  This gives a uniform
closed form for every derivative block:

    d1E = F'(kappa) grad1(kappa)^T
    d_a d_b E = F''(kappa) grad_a(kappa) grad_b(kappa)^T + F'(kappa) grad_a grad_b(kappa)

``beta`` is computed from the cross product rather than from ``kappa`` so
that it keeps full relative precision near coincident pairs.  Both ``F'`` and
``F''`` carry negative powers of ``beta``; the set ``beta = 0`` is the
excluded set of the maps.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from functools import cached_property
from math import sqrt
from operator import mul

import numpy as np
from numpy.typing import NDArray

from .errors import SingularPair
from .manifold import EmbeddedManifold, Lissajous, ManifoldPoint, Sphere
from .navigation import NavigationFunction

Array = NDArray[np.float64]

JET_EPS = 1e-9
SYMMETRY_TOL = 1e-10


class ErrorJet:
    """``E`` and all its first and second derivative blocks at a pair.

    Tensor convention: ``T(a, b)_k = sum_ij T[k, i, j] a_i b_j`` where the first
    slot is the differentiation direction.  ``t21 = d2(d1E)`` so
    ``t21(v_ref, v)`` is the rate of change of ``d1E v`` as ``q2`` moves along
    ``v_ref``.
    """

    def __init__(self, e: Array, d1: Array, d2: Array, t11: Array, t21: Array, t12: Array,
                 t22: Array, singularity_margin: float, cos_angle: float = float("nan")):
        self.e, self.d1, self.d2 = e, d1, d2
        self.t11, self.t21, self.t12, self.t22 = t11, t21, t12, t22
        self.singularity_margin = singularity_margin
        self.cos_angle = cos_angle

    def velocity(self, v: Array, v_ref: Array) -> Array:
        return self.d1 @ v + self.d2 @ v_ref

    def apply_d1(self, w: Array) -> Array:
        return self.d1 @ w

    def apply_d2(self, w: Array) -> Array:
        return self.d2 @ w

    def second_order(self, v: Array, v_ref: Array) -> Array:
        """``t11(v,v) + t21(v_ref,v) + t12(v,v_ref) + t22(v_ref,v_ref)``."""
        return (np.einsum("kij,i,j->k", self.t11, v, v)
                + np.einsum("kij,i,j->k", self.t21, v_ref, v)
                + np.einsum("kij,i,j->k", self.t12, v, v_ref)
                + np.einsum("kij,i,j->k", self.t22, v_ref, v_ref))


class ProfileJet(ErrorJet):
    """Jet of ``E = F(kappa)``; tensors are assembled only when accessed."""

    def __init__(self, F: Array, F1: Array, F2: Array, d: AngleData):
        self.e = F
        self.F1, self.F2, self.angle = F1, F2, d
        self.singularity_margin = d.beta
        self.cos_angle = d.kappa

    @cached_property
    def d1(self):
        return np.multiply.outer(self.F1, self.angle.g1)

    @cached_property
    def d2(self):
        return np.multiply.outer(self.F1, self.angle.g2)

    def velocity(self, v, v_ref):
        return self.angle.rate(v, v_ref) * self.F1

    def apply_d1(self, w):
        return float(self.angle.g1 @ w) * self.F1

    def apply_d2(self, w):
        return float(self.angle.g2 @ w) * self.F1

    @property
    def rank_one_factors(self) -> tuple[Array, Array]:
        """``(F', grad1 kappa)`` with ``d1E = F' grad1^T``."""
        return self.F1, self.angle.g1

    def _tensor(self, ga: Array, gb: Array, h: Array) -> Array:
        outer = np.multiply.outer
        return outer(self.F2, outer(ga, gb)) + outer(self.F1, h)

    @cached_property
    def t11(self):
        return self._tensor(self.angle.g1, self.angle.g1, self.angle.h11)

    @cached_property
    def t21(self):
        return self._tensor(self.angle.g2, self.angle.g1, self.angle.h12.T)

    @cached_property
    def t12(self):
        return self._tensor(self.angle.g1, self.angle.g2, self.angle.h12)

    @cached_property
    def t22(self):
        return self._tensor(self.angle.g2, self.angle.g2, self.angle.h22)

    def second_order(self, v, v_ref):
        rate = self.angle.rate(v, v_ref)
        return self.F2 * (rate * rate) + self.F1 * self.angle.quadratic(v, v_ref)


class ConfigurationErrorMap(ABC):
    """Smooth ``E: M x M -> M`` used to turn tracking into stabilisation."""

    manifold: EmbeddedManifold

    @abstractmethod
    def error_at(self, q1: Array, q2: Array) -> Array:
        """Raw evaluation without membership checks."""

    def error(self, q1, q2) -> ManifoldPoint:
        x1 = self.manifold.check_point(q1)
        x2 = self.manifold.check_point(q2)
        return ManifoldPoint(self.error_at(x1, x2), self.manifold)

    def jet_at(self, q1: Array, q2: Array, eps: float = JET_EPS) -> ErrorJet:
        """Raw jet evaluation without membership checks."""
        raise NotImplementedError(f"{type(self).__name__} provides no derivative jet")

    def jet(self, q1, q2, eps: float = JET_EPS) -> ErrorJet:
        return self.jet_at(self.manifold.check_point(q1), self.manifold.check_point(q2), eps)

    def singular_kind(self, q1: Array, q2: Array, eps: float = JET_EPS) -> str | None:
        """``"coincident"``, ``"antipodal"`` or ``None`` when the jet is available."""
        return None


class AngleData:
    """``kappa``, ``beta`` and the first and second derivatives of ``kappa``.

    ``a = q1/|q1|`` and ``b = q2/|q2|``; ``g1, g2`` are the gradients of
    ``kappa`` in each argument.  The Hessian blocks are built on first access.
    """

    def __init__(self, kappa: float, beta: float, a: Array, b: Array, n1: float, n2: float,
                 g1: Array, g2: Array):
        self.kappa, self.beta = kappa, beta
        self.a, self.b, self.n1, self.n2 = a, b, n1, n2
        self.g1, self.g2 = g1, g2

    @cached_property
    def h11(self) -> Array:
        a, g1, n1 = self.a, self.g1, self.n1
        outer = np.multiply.outer
        return (-(outer(a, g1) + outer(g1, a)) / n1
                - self.kappa * (np.eye(a.shape[0]) - outer(a, a)) / (n1 * n1))

    @cached_property
    def h22(self) -> Array:
        b, g2, n2 = self.b, self.g2, self.n2
        outer = np.multiply.outer
        return (-(outer(b, g2) + outer(g2, b)) / n2
                - self.kappa * (np.eye(b.shape[0]) - outer(b, b)) / (n2 * n2))

    @cached_property
    def h12(self) -> Array:
        """``h12[i, j] = d^2 kappa / dq1_i dq2_j``."""
        b, outer = self.b, np.multiply.outer
        return ((np.eye(b.shape[0]) - outer(b, b)) / self.n2 - outer(self.a, self.g2)) / self.n1

    @cached_property
    def _vectors(self) -> tuple[list[float], ...]:
        return self.a.tolist(), self.b.tolist(), self.g1.tolist(), self.g2.tolist()

    def rate(self, v: Array, v_ref: Array) -> float:
        """``d kappa / dt = g1 . v + g2 . v_ref``."""
        _, _, g1, g2 = self._vectors
        return _dot(g1, v.tolist()) + _dot(g2, v_ref.tolist())

    def quadratic(self, v: Array, v_ref: Array) -> float:
        """``v h11 v + 2 v h12 v_ref + v_ref h22 v_ref`` without forming the blocks."""
        a, b, g1, g2 = self._vectors
        vl, wl = v.tolist(), v_ref.tolist()
        n1, n2, k = self.n1, self.n2, self.kappa
        av, bv, bw = _dot(a, vl), _dot(b, vl), _dot(b, wl)
        q11 = -2.0 * av * _dot(g1, vl) / n1 - k * (_dot(vl, vl) - av * av) / (n1 * n1)
        q22 = -2.0 * bw * _dot(g2, wl) / n2 - k * (_dot(wl, wl) - bw * bw) / (n2 * n2)
        q12 = ((_dot(vl, wl) - bv * bw) / n2 - av * _dot(g2, wl)) / n1
        return q11 + 2.0 * q12 + q22


def _dot(x: list[float], y: list[float]) -> float:
    return sum(map(mul, x, y))


def angle_data(q1: Array, q2: Array) -> AngleData:
    """Angle quantities of a pair of 3-vectors.

    Scalar arithmetic: several times faster than numpy at this size.
    ``g1 = (c x a) / n1`` with ``c = a x b``, which equals ``(b - kappa a) / n1``.
    """
    x0, x1, x2 = q1.tolist()
    y0, y1, y2 = q2.tolist()
    n1 = sqrt(x0 * x0 + x1 * x1 + x2 * x2)
    n2 = sqrt(y0 * y0 + y1 * y1 + y2 * y2)
    a = (x0 / n1, x1 / n1, x2 / n1)
    b = (y0 / n2, y1 / n2, y2 / n2)
    kappa = a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
    c = (a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0])
    beta = sqrt(c[0] * c[0] + c[1] * c[1] + c[2] * c[2])
    g1 = ((c[1] * a[2] - c[2] * a[1]) / n1, (c[2] * a[0] - c[0] * a[2]) / n1,
          (c[0] * a[1] - c[1] * a[0]) / n1)
    g2 = ((b[1] * c[2] - b[2] * c[1]) / n2, (b[2] * c[0] - b[0] * c[2]) / n2,
          (b[0] * c[1] - b[1] * c[0]) / n2)
    return AngleData(kappa, beta, np.array(a), np.array(b), n1, n2, np.array(g1), np.array(g2))


class AngleProfileErrorMap(ConfigurationErrorMap):
    """Error map of the form ``E(q1, q2) = F(kappa(q1, q2))``."""

    @abstractmethod
    def profile(self, kappa: float, beta: float) -> Array:
        """``F`` at ``kappa`` (``beta = sqrt(1 - kappa^2)`` passed for precision)."""

    @abstractmethod
    def profile_derivatives(self, kappa: float, beta: float) -> tuple[Array, Array]:
        """``(F'(kappa), F''(kappa))``; both singular at ``beta = 0``."""

    def error_at(self, q1, q2):
        d = angle_data(q1, q2)
        return self.profile(min(max(d.kappa, -1.0), 1.0), d.beta)

    def margin(self, q1, q2) -> float:
        """Distance-like measure to the excluded set ``beta = 0``."""
        return angle_data(q1, q2).beta

    def singular_kind(self, q1, q2, eps=JET_EPS):
        d = angle_data(q1, q2)
        if d.beta > eps:
            return None
        return "coincident" if d.kappa > 0 else "antipodal"

    def jet_at(self, q1: Array, q2: Array, eps: float = JET_EPS) -> ErrorJet:
        d = angle_data(q1, q2)
        if not d.beta > eps:
            kind = "coincident" if d.kappa > 0 else "antipodal"
            raise SingularPair(f"{kind} pair: margin {d.beta:.3e} <= {eps:g}", kind)
        kappa = min(max(d.kappa, -1.0), 1.0)
        F1, F2 = self.profile_derivatives(kappa, d.beta)
        return ProfileJet(self.profile(kappa, d.beta), F1, F2, d)


class SphereErrorMap(AngleProfileErrorMap):
    """``E(q1, q2) = (sqrt(1 - c^2), 0, -c)`` on S^2, ``c`` the cosine of the pair angle."""

    def __init__(self, manifold: Sphere | None = None):
        self.manifold = manifold or Sphere()

    def profile(self, kappa, beta):
        return np.array([beta, 0.0, -kappa])

    def profile_derivatives(self, kappa, beta):
        return (np.array([-kappa / beta, 0.0, -1.0]),
                np.array([-1.0 / beta**3, 0.0, 0.0]))


class LissajousErrorMap(AngleProfileErrorMap):
    """``E(q1, q2) = (-c, -2 c beta, beta (4 c^2 - 1))`` on the Lissajous curve.

    With ``theta = pi - angle(q1, q2)`` this is ``(cos theta, sin 2 theta, sin 3 theta)``.
    """

    def __init__(self, manifold: Lissajous | None = None):
        self.manifold = manifold or Lissajous()

    def profile(self, kappa, beta):
        return np.array([-kappa, -2.0 * kappa * beta, beta * (4.0 * kappa**2 - 1.0)])

    def profile_derivatives(self, kappa, beta):
        k2 = kappa * kappa
        F1 = np.array([-1.0, (4.0 * k2 - 2.0) / beta, (9.0 * kappa - 12.0 * kappa * k2) / beta])
        b3 = beta**3
        F2 = np.array([0.0, (6.0 * kappa - 4.0 * kappa * k2) / b3,
                       (9.0 - 36.0 * k2 + 24.0 * k2 * k2) / b3])
        return F1, F2


def verify_compatibility(emap: ConfigurationErrorMap, nav: NavigationFunction,
                         manifold: EmbeddedManifold | None = None, n_samples: int = 1000,
                         rng: np.random.Generator | None = None) -> bool:
    """Check swap symmetry of ``psi o E`` and ``E(q, q) = q_m`` on random samples."""
    M = manifold or emap.manifold
    rng = rng if rng is not None else np.random.default_rng(0)
    qa = M.sample(rng, n_samples)
    qb = M.sample(rng, n_samples)
    qm = np.asarray(nav.minimizer)
    for x1, x2 in zip(qa, qb):
        if abs(nav.value_at(emap.error_at(x1, x2)) - nav.value_at(emap.error_at(x2, x1))) > SYMMETRY_TOL:
            return False
    for x in qa:
        if not np.linalg.norm(emap.error_at(x, x) - qm) <= SYMMETRY_TOL:
            return False
    return True


__all__ = [
    "JET_EPS", "ErrorJet", "ProfileJet", "ConfigurationErrorMap", "AngleData", "angle_data",
    "AngleProfileErrorMap", "SphereErrorMap", "LissajousErrorMap", "verify_compatibility",
]
