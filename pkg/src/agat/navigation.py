"""Navigation functions: evaluation, gradients and a numerical axiom check."""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from .errors import DegenerateCritical
from .manifold import EmbeddedManifold, TangentVector

Array = NDArray[np.float64]

CRITICAL_TOL = 1e-8
DEGENERACY_TOL = 1e-6
HESSIAN_STEP = 1e-4


class NavigationFunction(ABC):
    """Smooth ``psi: M -> R`` with a unique minimum and nondegenerate critical points."""

    def __init__(self, manifold: EmbeddedManifold):
        self.manifold = manifold

    @abstractmethod
    def value_at(self, x: Array) -> float:
        """Value of the ambient extension (no membership check)."""

    @abstractmethod
    def differential_at(self, x: Array) -> Array:
        """Ambient differential of the extension as a vector in R^m."""

    @property
    @abstractmethod
    def minimizer(self) -> Array:
        """The unique global minimum ``q_m``."""

    def value(self, q) -> float:
        return self.value_at(self.manifold.check_point(q))

    def ambient_differential(self, q) -> Array:
        return self.differential_at(self.manifold.check_point(q))

    def gradient_at(self, x: Array) -> Array:
        return self.manifold.project_at(x, self.differential_at(x))

    def riemannian_gradient(self, q) -> TangentVector:
        pt = q if hasattr(q, "manifold") else self.manifold.point(q)
        return TangentVector(pt, self.gradient_at(self.manifold.check_point(pt)))


class CoordinateFunction(NavigationFunction):
    """``psi(x) = x[axis]``, a height function on the embedded manifold."""

    def __init__(self, manifold: EmbeddedManifold, axis: int, minimizer):
        super().__init__(manifold)
        self.axis = axis
        self._grad = np.zeros(manifold.ambient_dim)
        self._grad[axis] = 1.0
        self._min = np.asarray(minimizer, dtype=float)

    def value_at(self, x):
        return float(x[self.axis])

    def differential_at(self, x):
        return self._grad

    @property
    def minimizer(self):
        return self._min


class ConstantFunction(NavigationFunction):
    """Degenerate example: every point is critical."""

    def __init__(self, manifold: EmbeddedManifold, c: float = 0.0):
        super().__init__(manifold)
        self.c = c

    def value_at(self, x):
        return self.c

    def differential_at(self, x):
        return np.zeros(self.manifold.ambient_dim)

    @property
    def minimizer(self):
        return np.full(self.manifold.ambient_dim, np.nan)


def sphere_height(manifold: EmbeddedManifold) -> CoordinateFunction:
    """``psi = z`` on S^2, minimum at the south pole."""
    return CoordinateFunction(manifold, 2, (0.0, 0.0, -1.0))


def lissajous_height(manifold: EmbeddedManifold) -> CoordinateFunction:
    """``psi = x`` on the Lissajous curve, minimum at (-1, 0, 0)."""
    return CoordinateFunction(manifold, 0, (-1.0, 0.0, 0.0))


@dataclass(frozen=True)
class CriticalPoint:
    x: Array
    value: float
    hessian: Array
    index: int  # number of negative Hessian eigenvalues

    @property
    def kind(self) -> str:
        if self.index == 0:
            return "min"
        if self.index == self.hessian.shape[0]:
            return "max"
        return "saddle"


@dataclass
class NavigationReport:
    critical_points: list[CriticalPoint] = field(default_factory=list)

    @property
    def minima(self) -> list[CriticalPoint]:
        return [c for c in self.critical_points if c.kind == "min"]

    @property
    def ok(self) -> bool:
        return len(self.minima) == 1


def intrinsic_hessian(nav: NavigationFunction, x: Array, h: float = HESSIAN_STEP) -> Array:
    """Finite-difference Hessian of ``t -> psi(retract(x + B t))`` at ``t = 0``."""
    M = nav.manifold
    B = M.tangent_basis(x)
    n = B.shape[1]

    def f(t):
        return nav.value_at(M.retract(x + B @ t).x)

    H = np.empty((n, n))
    f0 = f(np.zeros(n))
    E = np.eye(n) * h
    for i in range(n):
        H[i, i] = (f(E[i]) - 2 * f0 + f(-E[i])) / h**2
        for j in range(i):
            H[i, j] = H[j, i] = (f(E[i] + E[j]) - f(E[i] - E[j])
                                 - f(E[j] - E[i]) + f(-E[i] - E[j])) / (4 * h**2)
    return H


def _flow_to_critical(nav: NavigationFunction, x: Array, sign: float,
                      max_iter: int = 400) -> Array:
    """Gradient flow with backtracking, then Newton polishing in a tangent chart."""
    M = nav.manifold
    step = 1.0
    for _ in range(max_iter):
        g = nav.gradient_at(x)
        gn = float(np.linalg.norm(g))
        if gn < 1e-4:
            break
        f0 = sign * nav.value_at(x)
        while step > 1e-10:
            trial = M.retract(x - sign * step * g).x
            if sign * nav.value_at(trial) <= f0 - 0.25 * step * gn**2:
                break
            step *= 0.5
        x = trial
        step = min(2.0 * step, 10.0)
    for _ in range(30):
        g = nav.gradient_at(x)
        if np.linalg.norm(g) < 1e-13:
            break
        B = M.tangent_basis(x)
        H = intrinsic_hessian(nav, x)
        try:
            t = np.linalg.solve(H, -(B.T @ g))
        except np.linalg.LinAlgError:
            break
        if np.linalg.norm(t) > 0.1:
            t *= 0.1 / np.linalg.norm(t)
        x = M.retract(x + B @ t).x
    return x


def verify_navigation(nav: NavigationFunction, manifold: EmbeddedManifold | None = None,
                      n_samples: int = 20, rng: np.random.Generator | None = None,
                      ) -> NavigationReport:
    """Locate critical points from sampled starts and classify them.

    Each sample is flowed both down and up the gradient, then polished with
    Newton steps.  Distinct limits with gradient below ``CRITICAL_TOL`` are
    classified by the sign pattern of the finite-difference intrinsic Hessian.

    Raises:
        DegenerateCritical: if some critical point has ``|det Hess| < 1e-6``.
    """
    M = manifold or nav.manifold
    rng = rng if rng is not None else np.random.default_rng(0)
    found: list[CriticalPoint] = []
    for x0 in M.sample(rng, n_samples):
        for sign in (1.0, -1.0):
            x = _flow_to_critical(nav, x0, sign)
            if np.linalg.norm(nav.gradient_at(x)) >= CRITICAL_TOL:
                continue
            if any(np.linalg.norm(c.x - x) < 1e-6 for c in found):
                continue
            H = intrinsic_hessian(nav, x)
            if abs(np.linalg.det(H)) < DEGENERACY_TOL:
                raise DegenerateCritical(f"degenerate critical point at {x}")
            index = int(np.sum(np.linalg.eigvalsh(0.5 * (H + H.T)) < 0))
            found.append(CriticalPoint(x, nav.value_at(x), H, index))
    found.sort(key=lambda c: c.value)
    return NavigationReport(found)


__all__ = [
    "NavigationFunction", "CoordinateFunction", "ConstantFunction", "sphere_height",
    "lissajous_height", "CriticalPoint", "NavigationReport", "intrinsic_hessian",
    "verify_navigation",
]
