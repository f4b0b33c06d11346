"""Rigid-body tracking on SO(3): group calculus, Euler-Poincare dynamics, controllers.

Conventions: ``R`` maps body to world coordinates, ``xi`` is the body angular
velocity, and controls ``u`` are body-frame accelerations (``u = I^-1 tau`` for
a torque ``tau``), so that

    R' = R hat(xi),        xi' = I^-1 ((I xi) x xi) + u.

The error map is ``E(R, R_r) = R_r R^T`` with body velocity ``eta = R (xi_r - xi)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .controller import check_dissipative
from .errors import NotSkewSymmetric, OffManifold
from .integrator import Monitors
from .numerics import cross3

Array = NDArray[np.float64]

ROTATION_TOL = 1e-8
SKEW_TOL = 1e-10
SYMMETRY_TOL = 1e-12
_EYE3 = np.eye(3)

ControllerKind = Literal["agat", "pdff"]


# -- so(3) calculus -----------------------------------------------------------

def hat(v: ArrayLike) -> Array:
    """Skew matrix with ``hat(v) w = v x w``."""
    a, b, c = np.asarray(v, dtype=float).tolist()
    return np.array(((0.0, -c, b), (c, 0.0, -a), (-b, a, 0.0)))


def vee(S: ArrayLike, tol: float = SKEW_TOL) -> Array:
    """Inverse of :func:`hat`.

    Raises:
        NotSkewSymmetric: if ``|S + S^T|_F > tol``.
    """
    S = np.asarray(S, dtype=float)
    if S.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {S.shape}")
    asym = float(np.linalg.norm(S + S.T))
    if asym > tol:
        raise NotSkewSymmetric(f"|S + S^T|_F = {asym:.3e} exceeds {tol:g}")
    return np.array((S[2, 1], S[0, 2], S[1, 0]))


def _vee_skew(M: Array) -> Array:
    """``vee(M - M^T)`` without the skewness check (exact by construction)."""
    return np.array((M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]))


def rotation_residual(R: ArrayLike) -> float:
    """``|R^T R - I|_F``."""
    R = np.asarray(R, dtype=float)
    return float(np.linalg.norm(R.T @ R - _EYE3))


def check_rotation(R: ArrayLike, tol: float = ROTATION_TOL) -> Array:
    """Return ``R`` as an array if it is a proper rotation within ``tol``.

    Raises:
        OffManifold: if ``|R^T R - I|_F > tol`` or ``det R <= 0``.
    """
    R = np.asarray(R, dtype=float)
    if R.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {R.shape}")
    res = rotation_residual(R)
    if not res <= tol:
        raise OffManifold(f"|R^T R - I|_F = {res:.3e} exceeds {tol:g}")
    if np.linalg.det(R) <= 0:
        raise OffManifold("rotation has non-positive determinant")
    return R


def polar_orthonormalize(R: ArrayLike) -> Array:
    """Closest rotation in Frobenius norm, the orthogonal polar factor ``U V^T``.

    Raises:
        OffManifold: if the closest orthogonal matrix is a reflection.
    """
    U, _, Vt = np.linalg.svd(np.asarray(R, dtype=float))
    Q = U @ Vt
    if np.linalg.det(Q) <= 0:
        raise OffManifold("matrix is closer to a reflection than to a rotation")
    return Q


def rotation_about(axis: ArrayLike, angle: float) -> Array:
    """Rodrigues formula ``exp(angle hat(axis / |axis|))``."""
    a = np.asarray(axis, dtype=float)
    K = hat(a / np.linalg.norm(a))
    return _EYE3 + np.sin(angle) * K + (1.0 - np.cos(angle)) * (K @ K)


# -- rigid-body data ------------------------------------------------------------

@dataclass(frozen=True)
class Inertia:
    """Symmetric positive-definite inertia matrix and its cached inverse."""

    matrix: Array
    inverse: Array = field(init=False, repr=False)

    def __post_init__(self):
        M = np.array(self.matrix, dtype=float)
        if M.shape != (3, 3):
            raise ValueError(f"inertia must be 3x3, got shape {M.shape}")
        if np.max(np.abs(M - M.T)) > SYMMETRY_TOL:
            raise ValueError("inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(M)) <= 0:
            raise ValueError("inertia must be positive definite")
        object.__setattr__(self, "matrix", M)
        object.__setattr__(self, "inverse", np.linalg.inv(M))

    def momentum(self, xi: Array) -> Array:
        return self.matrix @ xi

    def kinetic_energy(self, xi: Array) -> float:
        return 0.5 * float(xi @ self.matrix @ xi)


@dataclass(frozen=True)
class So3Gains:
    """``psi(E) = tr(P (I - E))`` weight ``P``, dissipation ``K_d`` and ``k_p``."""

    P: Array
    K_d: Array
    k_p: float = 1.0

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        K = np.array(self.K_d, dtype=float)
        if P.shape != (3, 3) or K.shape != (3, 3):
            raise ValueError("P and K_d must be 3x3")
        if np.max(np.abs(P - P.T)) > SYMMETRY_TOL:
            raise ValueError("P must be symmetric")
        eig = np.linalg.eigvalsh(P)
        if eig[0] <= 0:
            raise ValueError("P must be positive definite")
        if np.min(np.diff(eig)) <= 1e-12 * eig[-1]:
            # repeated eigenvalues give tr(P(I - E)) a continuum of critical points
            raise ValueError("P must have distinct eigenvalues")
        if not check_dissipative(K):
            raise ValueError("K_d must be negative semidefinite")
        if not (np.isscalar(self.k_p) and self.k_p > 0):
            raise ValueError("k_p must be a positive scalar")
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "K_d", K)


@dataclass(frozen=True)
class So3State:
    """Attitude ``R`` and body angular velocity ``omega`` at time ``t``."""

    R: Array
    omega: Array
    t: float = 0.0


def euler_poincare_rhs(R: Array, omega: Array, inertia: Inertia,
                       u: Array | None = None) -> tuple[Array, Array]:
    """``(R', omega')`` with ``omega' = I^-1 ((I omega) x omega) + u``."""
    omega_dot = inertia.inverse @ cross3(inertia.matrix @ omega, omega)
    if u is not None:
        omega_dot = omega_dot + u
    return R @ hat(omega), omega_dot


def nabla_frak_g(eta: Array, nu: Array, inertia: Inertia) -> Array:
    """Left-invariant connection on so(3):
    ``1/2 eta x nu - 1/2 I^-1 ((I nu) x eta + (I eta) x nu)``."""
    Ie = inertia.matrix @ eta
    In = inertia.matrix @ nu
    return 0.5 * cross3(eta, nu) - 0.5 * (inertia.inverse @ (cross3(In, eta) + cross3(Ie, nu)))


def group_error(R: Array, R_r: Array) -> Array:
    """``E = R_r R^T``."""
    return R_r @ R.T


def nav_so3(E: Array, P: Array) -> float:
    """``tr(P (I - E))``."""
    return float(np.trace(P) - np.sum(P * E.T))


def dnav_so3(E: Array, P: Array) -> Array:
    """Left-trivialised differential: ``d/ds psi(E exp(s hat(w))) = <dnav, w>`` at 0."""
    return _vee_skew(P @ E)


def error_body_velocity(R: Array, xi: Array, xi_r: Array) -> Array:
    """``eta = E^-1 E'`` as a vector: ``R (xi_r - xi)``."""
    return R @ (xi_r - xi)


def agat_control_so3(R: Array, R_r: Array, xi: Array, xi_r: Array, xi_r_dot: Array,
                     inertia: Inertia, gains: So3Gains) -> Array:
    """Body acceleration realising ``eta' + nabla_eta eta = I^-1(-k_p dpsi(E) + K_d eta)``.

    From ``eta' = R (xi x xi_r + xi_r' - xi')`` and the plant equation,

        u = xi x xi_r + xi_r' - I^-1((I xi) x xi) + R^T (nabla_eta eta - I^-1(-k_p dpsi + K_d eta)).
    """
    E = R_r @ R.T
    eta = R @ (xi_r - xi)
    Iinv = inertia.inverse
    target = Iinv @ (-gains.k_p * dnav_so3(E, gains.P) + gains.K_d @ eta)
    inner = nabla_frak_g(eta, eta, inertia) - target
    return (cross3(xi, xi_r) + xi_r_dot - Iinv @ cross3(inertia.matrix @ xi, xi)
            + R.T @ inner)


def pdff_control_so3(R: Array, R_r: Array, xi: Array, v_r: Array, v_r_dot: Array,
                     inertia: Inertia, gains: So3Gains) -> Array:
    """PD plus feed-forward baseline on the left error ``R_e = R_r^T R``.

    With ``w = R_e^T v_r`` the reference velocity seen in the body frame and
    ``zeta = xi - w``,

        u = I^-1(-k_p dpsi(R_e) + K_d zeta) + nabla_xi w + w x xi + R_e^T v_r'.
    """
    R_e = R_r.T @ R
    w = R_e.T @ v_r
    zeta = xi - w
    force = -gains.k_p * dnav_so3(R_e, gains.P) + gains.K_d @ zeta
    w_dot = cross3(w, xi) + R_e.T @ v_r_dot
    return inertia.inverse @ force + nabla_frak_g(xi, w, inertia) + w_dot


def agat_energy(R: Array, R_r: Array, xi: Array, xi_r: Array, inertia: Inertia,
                gains: So3Gains) -> float:
    """``k_p psi(E) + 1/2 <I eta, eta>``, non-increasing under the AGAT law."""
    eta = R @ (xi_r - xi)
    return gains.k_p * nav_so3(R_r @ R.T, gains.P) + inertia.kinetic_energy(eta)


def pdff_energy(R: Array, R_r: Array, xi: Array, v_r: Array, inertia: Inertia,
                gains: So3Gains) -> float:
    """``k_p psi(R_r^T R) + 1/2 <I zeta, zeta>``, non-increasing under the baseline."""
    R_e = R_r.T @ R
    zeta = xi - R_e.T @ v_r
    return gains.k_p * nav_so3(R_e, gains.P) + inertia.kinetic_energy(zeta)


def control_effort(u: ArrayLike) -> float:
    """Euclidean norm of the so(3) control vector."""
    u = np.asarray(u, dtype=float)
    return float(np.sqrt(u @ u))


# -- closed loop -------------------------------------------------------------------

class FreeBodyReference:
    """Torque-free dummy body; supplies ``(R_r, xi_r, xi_r')`` and is co-integrated."""

    aux_dim = 12

    def __init__(self, inertia: Inertia, R0: ArrayLike, omega0: ArrayLike):
        self.inertia = inertia
        self.R0 = check_rotation(R0)
        self.omega0 = np.asarray(omega0, dtype=float)

    def initial(self) -> Array:
        return np.concatenate((self.R0.ravel(), self.omega0))

    def split(self, z: Array) -> tuple[Array, Array]:
        return z[:9].reshape(3, 3), z[9:12]

    def acceleration(self, omega: Array) -> Array:
        return euler_poincare_rhs(_EYE3, omega, self.inertia)[1]

    def derivative(self, t: float, z: Array) -> Array:
        R, omega = self.split(z)
        Rdot, wdot = euler_poincare_rhs(R, omega, self.inertia)
        return np.concatenate((Rdot.ravel(), wdot))

    def project(self, z: Array) -> Array:
        R, omega = self.split(z)
        return np.concatenate((polar_orthonormalize(R).ravel(), omega))


class RigidBodyClosedLoop:
    """Rigid body tracking a free dummy body under the AGAT or PD+FF law.

    State layout ``[R (row-major), xi, R_r, xi_r]``.  ``controller=None`` leaves the
    body torque-free.  ``e_cl`` logs the Lyapunov function of the active law.
    """

    def __init__(self, inertia: Inertia, gains: So3Gains, reference: FreeBodyReference,
                 controller: ControllerKind | None = "agat"):
        if controller not in ("agat", "pdff", None):
            raise ValueError(f"unknown controller {controller!r}")
        self.inertia = inertia
        self.gains = gains
        self.reference = reference
        self.controller = controller
        self._memo: tuple[float, bytes, Array] | None = None
        self.columns = (["t"] + [f"R{i}" for i in range(9)] + [f"Rr{i}" for i in range(9)]
                        + [f"xi{i}" for i in range(3)] + [f"xir{i}" for i in range(3)]
                        + [f"e{i}" for i in range(9)] + ["psi_e", "e_cl"]
                        + [f"u{i}" for i in range(3)] + ["u_norm", "residual"])

    def initial(self, R0: ArrayLike, omega0: ArrayLike) -> Array:
        R0 = check_rotation(R0)
        return np.concatenate((R0.ravel(), np.asarray(omega0, dtype=float),
                               self.reference.initial()))

    def split(self, y: Array) -> tuple[Array, Array, Array, Array]:
        R_r, xi_r = self.reference.split(y[12:])
        return y[:9].reshape(3, 3), y[9:12], R_r, xi_r

    def control(self, R: Array, xi: Array, R_r: Array, xi_r: Array) -> Array:
        if self.controller is None:
            return np.zeros(3)
        xi_r_dot = self.reference.acceleration(xi_r)
        if self.controller == "agat":
            return agat_control_so3(R, R_r, xi, xi_r, xi_r_dot, self.inertia, self.gains)
        return pdff_control_so3(R, R_r, xi, xi_r, xi_r_dot, self.inertia, self.gains)

    def energy(self, R: Array, xi: Array, R_r: Array, xi_r: Array) -> float:
        if self.controller == "pdff":
            return pdff_energy(R, R_r, xi, xi_r, self.inertia, self.gains)
        return agat_energy(R, R_r, xi, xi_r, self.inertia, self.gains)

    def derivative(self, t: float, y: Array) -> Array:
        R, xi, R_r, xi_r = self.split(y)
        memo = self._memo
        if memo is not None and memo[0] == t and memo[1] == y.tobytes():
            u = memo[2]
        else:
            u = self.control(R, xi, R_r, xi_r)
        Rdot, xidot = euler_poincare_rhs(R, xi, self.inertia, u)
        return np.concatenate((Rdot.ravel(), xidot, self.reference.derivative(t, y[12:])))

    def project(self, y: Array) -> Array:
        R = polar_orthonormalize(y[:9].reshape(3, 3))
        return np.concatenate((R.ravel(), y[9:12], self.reference.project(y[12:])))

    def observe(self, t: float, y: Array) -> Array:
        R, xi, R_r, xi_r = self.split(y)
        u = self.control(R, xi, R_r, xi_r)
        self._memo = (t, y.tobytes(), u)
        E = group_error(R, R_r)
        residual = max(rotation_residual(R), rotation_residual(R_r))
        return np.concatenate(([t], R.ravel(), R_r.ravel(), xi, xi_r, E.ravel(),
                               [nav_so3(E, self.gains.P), self.energy(R, xi, R_r, xi_r)],
                               u, [control_effort(u), residual]))

    def monitors(self, row: Array) -> Monitors:
        xi = row[19:22]
        return Monitors(e_cl=float(row[-6]), constraint_residual=float(row[-1]),
                        energy=self.inertia.kinetic_energy(xi), effort=float(row[-2]))


__all__ = [
    "hat", "vee", "rotation_residual", "check_rotation", "polar_orthonormalize",
    "rotation_about", "Inertia", "So3Gains", "So3State", "euler_poincare_rhs", "nabla_frak_g",
    "group_error", "nav_so3", "dnav_so3", "error_body_velocity", "agat_control_so3",
    "pdff_control_so3", "agat_energy", "pdff_energy", "control_effort", "FreeBodyReference",
    "RigidBodyClosedLoop",
]
