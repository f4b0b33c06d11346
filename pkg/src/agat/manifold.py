"""Embedded submanifolds of R^m with the induced (Euclidean) metric.

A manifold here is the zero set of a smooth constraint ``h: R^m -> R^k`` with
full-rank Jacobian.  Velocities live in ``ker Dh(x)``; the uncontrolled motion
of a particle constrained to the manifold is ``x'' = -correction(x, x')``,
where the correction is the normal acceleration that keeps ``h(x(t)) = 0``.

Two flavours of every operation exist:

* raw methods (``projector``, ``tangent_basis``, ``correction``, ...) accept
  any point in a neighbourhood of the manifold.  The integrator needs them at
  Runge-Kutta stage points, which sit O(dt^2) off the constraint.
* public methods (``project_tangent``, ``connection_correction``, ...) first
  certify the base point and raise :class:`OffManifold` on violation.
"""

from __future__ import annotations

import math

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .numerics import cross3
from .errors import NotTangent, OffManifold, RankDeficientConstraint, RetractionFailed

POINT_TOL = 1e-9
TANGENT_TOL = 1e-9
AUTO_REPAIR_LIMIT = 1e-3
GRAM_COND_LIMIT = 1e10
MAX_NEWTON_ITERS = 50
_EYE3 = np.eye(3)

Array = NDArray[np.float64]


@dataclass(frozen=True, eq=False)
class ManifoldPoint:
    """Ambient coordinates of a point certified to lie on ``manifold``."""

    x: Array
    manifold: EmbeddedManifold

    @property
    def manifold_id(self) -> str:
        return self.manifold.name

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.x, dtype=dtype)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """Ambient vector certified to lie in the tangent space at ``base``."""

    base: ManifoldPoint
    v: Array

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.v, dtype=dtype)


def _coords(p) -> Array:
    if isinstance(p, ManifoldPoint):
        return p.x
    if isinstance(p, TangentVector):
        return p.v
    return np.asarray(p, dtype=float)


class EmbeddedManifold(ABC):
    """Zero set of ``h: R^m -> R^k`` with the metric inherited from R^m."""

    name: str = "manifold"
    ambient_dim: int = 3
    codim: int = 1

    @property
    def intrinsic_dim(self) -> int:
        return self.ambient_dim - self.codim

    # -- constraint data -------------------------------------------------
    @abstractmethod
    def constraint(self, x: Array) -> Array:
        """Constraint values ``h(x)``, shape ``(k,)``."""

    @abstractmethod
    def constraint_jacobian(self, x: Array) -> Array:
        """``Dh(x)``, shape ``(k, m)``."""

    @abstractmethod
    def constraint_hessians(self, x: Array) -> Array:
        """``D^2 h_i(x)`` stacked, shape ``(k, m, m)``."""

    def residual(self, x: ArrayLike) -> float:
        """Scalar constraint violation used against ``POINT_TOL``."""
        return float(np.max(np.abs(self.constraint(_coords(x)))))

    @abstractmethod
    def sample(self, rng: np.random.Generator, n: int) -> Array:
        """Draw ``n`` points spread over the manifold, shape ``(n, m)``."""

    # -- raw geometry (valid near the manifold) --------------------------
    def normal_basis(self, x: Array) -> Array:
        Q, _ = np.linalg.qr(self.constraint_jacobian(x).T)
        return Q

    def tangent_basis(self, x: Array) -> Array:
        """Orthonormal basis of ``ker Dh(x)`` as columns, shape ``(m, n)``."""
        Q, _ = np.linalg.qr(self.constraint_jacobian(x).T, mode="complete")
        return Q[:, self.codim:]

    def projector(self, x: Array) -> Array:
        N = self.normal_basis(x)
        return np.eye(self.ambient_dim) - N @ N.T

    def multipliers(self, x: Array, v: Array) -> Array:
        """Solve ``(Dh Dh^T) lam = -(v^T D^2h_i v)_i``."""
        Dh = self.constraint_jacobian(x)
        gram = Dh @ Dh.T
        if np.linalg.cond(gram) > GRAM_COND_LIMIT:
            raise RankDeficientConstraint("constraint Gram matrix is ill-conditioned")
        curv = np.einsum("kij,i,j->k", self.constraint_hessians(x), v, v)
        return np.linalg.solve(gram, -curv)

    def project_at(self, x: Array, w: Array) -> Array:
        """``projector(x) @ w``; subclasses may avoid forming the matrix."""
        return self.projector(x) @ w

    def correction(self, x: Array, v: Array) -> Array:
        """Normal acceleration term ``(nabla_v P_perp) v`` (so ``x'' = u - correction``)."""
        return -self.constraint_jacobian(x).T @ self.multipliers(x, v)

    # -- certified API ---------------------------------------------------
    def check_point(self, q) -> Array:
        x = _coords(q)
        if not np.all(np.isfinite(x)):
            raise OffManifold(f"non-finite point on {self.name}")
        r = self.residual(x)
        if r > POINT_TOL:
            raise OffManifold(f"point residual {r:.3e} on {self.name} exceeds {POINT_TOL:g}")
        return x

    def check_tangent(self, q, v) -> Array:
        x = self.check_point(q)
        w = _coords(v)
        off = float(np.linalg.norm(w - self.projector(x) @ w))
        if off > TANGENT_TOL:
            raise NotTangent(f"normal component {off:.3e} exceeds {TANGENT_TOL:g}")
        return w

    def point(self, x: ArrayLike, repair: bool = False) -> ManifoldPoint:
        """Certify ``x``; with ``repair`` small violations (< 1e-3) are retracted."""
        x = np.array(x, dtype=float)
        r = self.residual(x)
        if r > POINT_TOL:
            if not repair or r >= AUTO_REPAIR_LIMIT:
                raise OffManifold(f"point residual {r:.3e} on {self.name}")
            return self.retract(x)
        return ManifoldPoint(x, self)

    def tangent(self, q, v: ArrayLike, repair: bool = False) -> TangentVector:
        base = q if isinstance(q, ManifoldPoint) else self.point(q)
        w = np.array(v, dtype=float)
        Pw = self.projector(base.x) @ w
        off = float(np.linalg.norm(w - Pw))
        if off > TANGENT_TOL:
            if not repair or off >= AUTO_REPAIR_LIMIT:
                raise NotTangent(f"normal component {off:.3e} on {self.name}")
            w = Pw
        return TangentVector(base, w)

    def project_tangent(self, q, w: ArrayLike) -> Array:
        x = self.check_point(q)
        return self.projector(x) @ np.asarray(w, dtype=float)

    def project_normal(self, q, w: ArrayLike) -> Array:
        x = self.check_point(q)
        w = np.asarray(w, dtype=float)
        return w - self.projector(x) @ w

    def geodesic_multipliers(self, q, v) -> Array:
        x = self.check_point(q)
        return self.multipliers(x, _coords(v))

    def connection_correction(self, q, v) -> Array:
        x = self.check_point(q)
        w = self.check_tangent(x, v)
        return self.correction(x, w)

    def retract(self, x: ArrayLike) -> ManifoldPoint:
        """Damped Gauss-Newton projection along the span of the constraint gradients."""
        x = np.array(x, dtype=float)
        r = self.residual(x)
        for _ in range(MAX_NEWTON_ITERS):
            if r <= 1e-15:
                break
            Dh = self.constraint_jacobian(x)
            gram = Dh @ Dh.T
            if np.linalg.cond(gram) > GRAM_COND_LIMIT:
                raise RetractionFailed("constraint Jacobian lost rank during retraction")
            step = Dh.T @ np.linalg.solve(gram, self.constraint(x))
            alpha = 1.0
            while alpha > 1e-6:
                trial = x - alpha * step
                r_trial = self.residual(trial)
                if r_trial < r:
                    break
                alpha *= 0.5
            else:
                break
            x, r = trial, r_trial
        if not r < POINT_TOL:
            raise RetractionFailed(f"residual {r:.3e} after Newton projection on {self.name}")
        return ManifoldPoint(x, self)


class Sphere(EmbeddedManifold):
    """Unit sphere S^2 in R^3, ``h(x) = (|x|^2 - 1) / 2``."""

    name = "sphere"
    ambient_dim = 3
    codim = 1

    def constraint(self, x):
        return np.array([0.5 * (x @ x - 1.0)])

    def constraint_jacobian(self, x):
        return np.asarray(x, dtype=float)[None, :]

    def constraint_hessians(self, x):
        return np.eye(3)[None, :, :]

    def residual(self, x):
        return abs(float(np.linalg.norm(_coords(x))) - 1.0)

    def sample(self, rng, n):
        pts = rng.standard_normal((n, 3))
        return pts / np.linalg.norm(pts, axis=1, keepdims=True)

    def normal_basis(self, x):
        return (x / np.sqrt(x @ x))[:, None]

    def tangent_basis(self, x):
        n = x / np.sqrt(x @ x)
        a = np.zeros(3)
        a[int(np.argmin(np.abs(n)))] = 1.0
        b1 = a - (a @ n) * n
        b1 /= np.sqrt(b1 @ b1)
        return np.column_stack((b1, cross3(n, b1)))

    def projector(self, x):
        return _EYE3 - np.multiply.outer(x, x) / (x @ x)

    def project_at(self, x, w):
        return w - (x @ w) / (x @ x) * x

    def multipliers(self, x, v):
        return np.array([-(v @ v) / (x @ x)])

    def correction(self, x, v):
        return (v @ v) / (x @ x) * x

    def retract(self, x):
        x = np.array(x, dtype=float)
        nrm = float(np.linalg.norm(x))
        if not np.isfinite(nrm) or nrm == 0.0:
            raise RetractionFailed("cannot normalise the zero vector")
        return ManifoldPoint(x / nrm, self)


def lissajous_curve(t: float) -> Array:
    """``(cos t, sin 2t, sin 3t)``, a parameterisation of the Lissajous knot."""
    if isinstance(t, (float, int)):
        return np.array((math.cos(t), math.sin(2 * t), math.sin(3 * t)))
    return np.array([np.cos(t), np.sin(2 * t), np.sin(3 * t)])


def lissajous_curve_dot(t: float) -> Array:
    if isinstance(t, (float, int)):
        return np.array((-math.sin(t), 2 * math.cos(2 * t), 3 * math.cos(3 * t)))
    return np.array([-np.sin(t), 2 * np.cos(2 * t), 3 * np.cos(3 * t)])


def lissajous_curve_ddot(t: float) -> Array:
    if isinstance(t, (float, int)):
        return np.array((-math.cos(t), -4 * math.sin(2 * t), -9 * math.sin(3 * t)))
    return np.array([-np.cos(t), -4 * np.sin(2 * t), -9 * np.sin(3 * t)])


class Lissajous(EmbeddedManifold):
    """Space curve ``L = h^{-1}(0)``.

    ``h(x, y, z) = (x^2 + y^2 + z^2 - 2xyz - 1, 4x^2 y - 2xz - y)``, which
    contains the image of :func:`lissajous_curve`.
    """

    name = "lissajous"
    ambient_dim = 3
    codim = 2

    def constraint(self, x):
        a, b, c = x
        return np.array([a * a + b * b + c * c - 2 * a * b * c - 1.0,
                         4 * a * a * b - 2 * a * c - b])

    def constraint_jacobian(self, x):
        a, b, c = x
        return np.array([[2 * a - 2 * b * c, 2 * b - 2 * a * c, 2 * c - 2 * a * b],
                         [8 * a * b - 2 * c, 4 * a * a - 1.0, -2 * a]])

    def constraint_hessians(self, x):
        a, b, c = x
        return np.array([[[2.0, -2 * c, -2 * b],
                          [-2 * c, 2.0, -2 * a],
                          [-2 * b, -2 * a, 2.0]],
                         [[8 * b, 8 * a, -2.0],
                          [8 * a, 0.0, 0.0],
                          [-2.0, 0.0, 0.0]]])

    def sample(self, rng, n):
        ts = rng.uniform(-np.pi, np.pi, n)
        return np.array([lissajous_curve(t) for t in ts])

    def normal_basis(self, x):
        Dh = self.constraint_jacobian(x)
        n1 = Dh[0] / np.sqrt(Dh[0] @ Dh[0])
        w = Dh[1] - (Dh[1] @ n1) * n1
        return np.column_stack((n1, w / np.sqrt(w @ w)))

    def projector(self, x):
        b = self.tangent_basis(x)[:, 0]
        return np.multiply.outer(b, b)

    def project_at(self, x, w):
        b0, b1, b2 = self._unit_tangent(x)
        w0, w1, w2 = w.tolist()
        s = b0 * w0 + b1 * w1 + b2 * w2
        return np.array((s * b0, s * b1, s * b2))

    def multipliers(self, x, v):
        # scalar arithmetic: this runs several times per integration step
        a, b, c = x.tolist()
        v0, v1, v2 = v.tolist()
        r0 = (2 * a - 2 * b * c, 2 * b - 2 * a * c, 2 * c - 2 * a * b)
        r1 = (8 * a * b - 2 * c, 4 * a * a - 1.0, -2 * a)
        g00 = r0[0] * r0[0] + r0[1] * r0[1] + r0[2] * r0[2]
        g01 = r0[0] * r1[0] + r0[1] * r1[1] + r0[2] * r1[2]
        g11 = r1[0] * r1[0] + r1[1] * r1[1] + r1[2] * r1[2]
        det = g00 * g11 - g01 * g01
        if abs(det) * GRAM_COND_LIMIT < (g00 + g11) ** 2:
            raise RankDeficientConstraint("constraint Gram matrix is ill-conditioned")
        rhs0 = -(2 * (v0 * v0 + v1 * v1 + v2 * v2) - 4 * (c * v0 * v1 + b * v0 * v2 + a * v1 * v2))
        rhs1 = -(8 * b * v0 * v0 + 16 * a * v0 * v1 - 4 * v0 * v2)
        return np.array(((g11 * rhs0 - g01 * rhs1) / det, (g00 * rhs1 - g01 * rhs0) / det))

    def correction(self, x, v):
        lam0, lam1 = self.multipliers(x, v).tolist()
        a, b, c = x.tolist()
        return -np.array((lam0 * (2 * a - 2 * b * c) + lam1 * (8 * a * b - 2 * c),
                          lam0 * (2 * b - 2 * a * c) + lam1 * (4 * a * a - 1.0),
                          lam0 * (2 * c - 2 * a * b) - lam1 * 2 * a))

    def _unit_tangent(self, x) -> tuple[float, float, float]:
        a, b, c = x.tolist()
        r0 = (2 * a - 2 * b * c, 2 * b - 2 * a * c, 2 * c - 2 * a * b)
        r1 = (8 * a * b - 2 * c, 4 * a * a - 1.0, -2 * a)
        t = (r0[1] * r1[2] - r0[2] * r1[1], r0[2] * r1[0] - r0[0] * r1[2],
             r0[0] * r1[1] - r0[1] * r1[0])
        n = (t[0] * t[0] + t[1] * t[1] + t[2] * t[2]) ** 0.5
        return (t[0] / n, t[1] / n, t[2] / n)

    def tangent_basis(self, x):
        t = self._unit_tangent(x)
        return np.array(((t[0],), (t[1],), (t[2],)))


SPHERE = Sphere()
LISSAJOUS = Lissajous()
