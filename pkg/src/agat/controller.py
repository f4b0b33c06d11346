"""Almost-global tracking control on embedded manifolds.

The plant is ``q'' = u - C(q, q')`` with ``u`` tangent at ``q`` and ``C`` the
normal correction of the manifold.  Differentiating ``E(q, q_ref)`` twice,

    E'' = d1E u + second_order(v, v_ref) + d2E a_ref - d1E C(q, v),

and the control is chosen so that the tangential part of ``E''`` equals the
damped gradient flow ``P_E(-k_p grad psi(E) + k_d E')``.  The normal part of
``E''`` then automatically equals ``-C(E, E')``, because ``E`` stays on the
manifold.  The resulting linear equation for ``u`` is solved in orthonormal
tangent bases at ``q`` and at ``E``.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import sqrt
from operator import mul
from typing import Literal, Union

import numpy as np
from numpy.typing import NDArray

from .errormap import JET_EPS, ConfigurationErrorMap, ErrorJet, ProfileJet
from .errors import NearSingularTransport, SingularPair
from .manifold import EmbeddedManifold
from .navigation import NavigationFunction

Array = NDArray[np.float64]

RANK_RTOL = 1e-8
SIGMA_FLOOR = 1e-12
SOLVE_RTOL = 1e-8

KernelPolicy = Literal["damp", "min_norm"]


@dataclass(frozen=True)
class Gains:
    """``k_p > 0`` and dissipation ``F_diss(w) = k_d w`` (scalar or matrix ``k_d``)."""

    k_p: float
    k_d: Union[float, Array]

    def __post_init__(self):
        if not (np.isscalar(self.k_p) and self.k_p > 0):
            raise ValueError("k_p must be a positive scalar")

    def dissipation(self, w: Array) -> Array:
        if np.isscalar(self.k_d):
            return self.k_d * w
        return np.asarray(self.k_d) @ w


def check_dissipative(gains: Gains | float | Array) -> bool:
    """True iff ``<k_d w, w> <= 0`` for every ``w``."""
    k_d = gains.k_d if isinstance(gains, Gains) else gains
    if np.isscalar(k_d):
        return bool(k_d <= 0)
    K = np.asarray(k_d, dtype=float)
    return bool(np.max(np.linalg.eigvalsh(0.5 * (K + K.T))) <= 0)


@dataclass(frozen=True)
class ReferenceSample:
    """Reference position, velocity and ambient acceleration at one instant."""

    q: Array
    v: Array
    a: Array


def error_velocity(jet: ErrorJet, v: Array, v_ref: Array) -> Array:
    """``E' = d1E v + d2E v_ref``."""
    return jet.velocity(v, v_ref)


def error_rhs(jet: ErrorJet, nav: NavigationFunction, v: Array, v_ref: Array,
              gains: Gains) -> Array:
    """Target covariant acceleration ``P_E(-k_p dpsi(E) + k_d E')`` of the error."""
    e_dot = error_velocity(jet, v, v_ref)
    w = -gains.k_p * nav.differential_at(jet.e) + gains.dissipation(e_dot)
    return nav.manifold.project_at(jet.e, w)


def feedforward_terms(jet: ErrorJet, v: Array, v_ref: Array, a_ref: Array,
                      correction: Array | None = None) -> Array:
    """Everything in ``E''`` that does not come from ``u``, with the sign flipped.

    ``-(t11(v,v) + t21(v_ref,v) + t12(v,v_ref) + t22(v_ref,v_ref) + d2E a_ref)``
    plus ``d1E correction`` where ``correction = C(q, v)`` is the plant's normal
    acceleration.  The tensors are ambient derivatives, so the plant's normal
    acceleration shows up through ``d1E`` and must be cancelled explicitly.
    """
    ff = -(jet.second_order(v, v_ref) + jet.apply_d2(a_ref))
    if correction is not None:
        ff = ff + jet.apply_d1(correction)
    return ff


def _check_defect(defect: float, b_norm: float) -> None:
    if defect > SOLVE_RTOL * (1.0 + b_norm):
        raise NearSingularTransport(f"transport map cannot reach requested acceleration "
                                    f"(defect {defect:.3e})")


def _solve_rank_one(manifold: EmbeddedManifold, q: Array, f: Array, g: Array, rhs: Array,
                    damping: Array | None = None) -> tuple[Array, Array]:
    # d1E = f g^T: need f (g . u) = rhs with u tangent at q
    Pg = manifold.project_at(q, g)
    pg = Pg.tolist()
    fl, rl = f.tolist(), rhs.tolist()
    pg2 = sum(map(mul, pg, pg))
    f2 = sum(map(mul, fl, fl))
    g2 = float(g @ g)
    if pg2 * f2 <= (SIGMA_FLOOR**2) * max(1.0, f2 * g2):
        raise NearSingularTransport(f"transport map vanishes on T_q M (|P g|^2={pg2:.3e})")
    s = sum(map(mul, fl, rl)) / f2
    r = [y - s * x for x, y in zip(fl, rl)]
    _check_defect(sqrt(sum(map(mul, r, r))), sqrt(sum(map(mul, rl, rl))))
    c = s / pg2
    if damping is None:
        return c * Pg, Pg
    # kernel part of the damping: P w minus its component along P g
    Pw = manifold.project_at(q, damping)
    c -= sum(map(mul, pg, Pw.tolist())) / pg2
    return Pw + c * Pg, Pg


def solve_transport(manifold: EmbeddedManifold, q: Array, jet: ErrorJet, rhs: Array
                    ) -> tuple[Array, Array]:
    """Solve ``d1E u = rhs`` for tangent ``u`` in orthonormal bases.

    Returns the minimum-norm solution and the orthogonal projector onto the
    directions at ``q`` that ``d1E`` annihilates (zero when there are none).  Jets that
    expose ``rank_one_factors`` take a closed-form path; otherwise the
    ``n x n`` system ``(B_E^T d1E B_q) c = B_E^T rhs`` is solved by SVD.

    Raises:
        NearSingularTransport: if ``d1E`` is numerically zero on ``T_q M`` or
            ``rhs`` has a component it cannot reach.
    """
    factors = getattr(jet, "rank_one_factors", None)
    if factors is not None:
        u, Pg = _solve_rank_one(manifold, q, factors[0], factors[1], rhs)
        return u, manifold.projector(q) - np.multiply.outer(Pg, Pg) / float(Pg @ Pg)
    Bq = manifold.tangent_basis(q)
    BE = manifold.tangent_basis(jet.e)
    A = BE.T @ jet.d1 @ Bq
    b = BE.T @ rhs
    U, s, Vt = np.linalg.svd(A)
    scale = max(1.0, float(np.sqrt(np.sum(jet.d1 * jet.d1))))
    if s[0] <= SIGMA_FLOOR * scale:
        raise NearSingularTransport(f"transport map vanishes on T_q M (sigma={s[0]:.3e})")
    r = int(np.sum(s > RANK_RTOL * s[0]))
    c = Vt[:r].T @ ((U[:, :r].T @ b) / s[:r])
    _check_defect(float(np.linalg.norm(A @ c - b)), float(np.linalg.norm(b)))
    K = Bq @ Vt[r:].T
    return Bq @ c, K @ K.T


def _profile_control(M: EmbeddedManifold, q: Array, jet: ProfileJet, nav: NavigationFunction,
                     gains: Gains, v: Array, v_ref: Array, a_ref: Array, C: Array,
                     damping: Array | None) -> Array:
    # Same law as the general path, specialised to E = F(kappa) with scalar k_d.
    # Every term except the navigation gradient is a multiple of F' or F'':
    #   -k_p dpsi + k_d E' - second_order - d2E a_ref + d1E C
    #     = -k_p dpsi + (k_d rate - quad - g2.a_ref + g1.C) F' - rate^2 F''
    d = jet.angle
    rate = d.rate(v, v_ref)
    alpha = (gains.k_d * rate - d.quadratic(v, v_ref) - float(d.g2 @ a_ref)
             + float(d.g1 @ C))
    w = -gains.k_p * nav.differential_at(jet.e) + alpha * jet.F1 - (rate * rate) * jet.F2
    target = M.project_at(jet.e, w)
    return _solve_rank_one(M, q, jet.F1, d.g1, target, damping)[0]


def _control(q: Array, q_ref: Array, v: Array, v_ref: Array, a_ref: Array,
             nav: NavigationFunction, emap: ConfigurationErrorMap, gains: Gains,
             kernel: KernelPolicy, jet_eps: float, correction: Array | None = None
             ) -> tuple[Array, ErrorJet | None]:
    M = nav.manifold
    try:
        jet = emap.jet_at(q, q_ref, jet_eps)
    except SingularPair as exc:
        if exc.kind == "coincident":
            return M.project_at(q, a_ref + gains.dissipation(v - v_ref)), None
        raise
    C = M.correction(q, v) if correction is None else correction
    damping = a_ref + gains.dissipation(v - v_ref) if kernel == "damp" else None
    if isinstance(jet, ProfileJet) and np.isscalar(gains.k_d):
        return _profile_control(M, q, jet, nav, gains, v, v_ref, a_ref, C, damping), jet
    # P_E(error_rhs + ff) with the inner projection of error_rhs folded in
    e_dot = jet.velocity(v, v_ref)
    w = -gains.k_p * nav.differential_at(jet.e) + gains.dissipation(e_dot)
    target = M.project_at(jet.e, w + feedforward_terms(jet, v, v_ref, a_ref, C))
    factors = getattr(jet, "rank_one_factors", None)
    if factors is not None:
        # already tangent: a combination of projected vectors
        return _solve_rank_one(M, q, factors[0], factors[1], target, damping)[0], jet
    u, kernel_proj = solve_transport(M, q, jet, target)
    if damping is not None:
        u = u + kernel_proj @ damping
    return M.project_at(q, u), jet


def agat_control(q: Array, q_ref: Array, v: Array, v_ref: Array, a_ref: Array,
                 nav: NavigationFunction, emap: ConfigurationErrorMap, gains: Gains,
                 kernel: KernelPolicy = "damp", jet_eps: float = JET_EPS) -> Array:
    """Tangent control at ``q`` realising the damped gradient error dynamics.

    ``kernel="damp"`` additionally applies ``a_ref + k_d (v - v_ref)`` along the
    directions at ``q`` that ``d1E`` cannot see; those directions do not affect
    ``E`` and would otherwise receive no damping.  ``"min_norm"`` leaves them
    uncontrolled.

    At coincident pairs (``q = q_ref`` up to ``jet_eps``) the map is not
    differentiable and the control falls back to its limit
    ``P_q(a_ref + k_d (v - v_ref))``.  Antipodal pairs raise
    :class:`SingularPair`.
    """
    return _control(q, q_ref, v, v_ref, a_ref, nav, emap, gains, kernel, jet_eps)[0]


def closed_loop_energy(jet: ErrorJet, nav: NavigationFunction, v: Array, v_ref: Array,
                       k_p: float) -> float:
    """``E_cl = k_p psi(E) + |E'|^2 / 2``."""
    e_dot = error_velocity(jet, v, v_ref)
    return k_p * nav.value_at(jet.e) + 0.5 * float(e_dot @ e_dot)


class AgatController:
    """Stateless callable bundling manifold data, navigation function, error map and gains."""

    def __init__(self, nav: NavigationFunction, emap: ConfigurationErrorMap, gains: Gains,
                 kernel: KernelPolicy = "damp", jet_eps: float = JET_EPS):
        if not check_dissipative(gains):
            raise ValueError("k_d is not dissipative")
        if kernel not in ("damp", "min_norm"):
            raise ValueError(f"unknown kernel policy {kernel!r}")
        self.nav = nav
        self.emap = emap
        self.gains = gains
        self.kernel = kernel
        self.jet_eps = jet_eps

    @property
    def manifold(self) -> EmbeddedManifold:
        return self.nav.manifold

    def __call__(self, q: Array, v: Array, ref: ReferenceSample,
                 correction: Array | None = None) -> Array:
        """Control at ``(q, v)``; ``correction`` may pass a precomputed ``C(q, v)``."""
        return _control(q, ref.q, v, ref.v, ref.a, self.nav, self.emap, self.gains,
                        self.kernel, self.jet_eps, correction)[0]

    def evaluate(self, q: Array, v: Array, ref: ReferenceSample
                 ) -> tuple[Array, Array, Array, float]:
        """``(u, E, E', E_cl)`` from a single jet evaluation.

        At coincident pairs ``E'`` has no limit; ``|v - v_ref|`` bounds its norm
        there and stands in for it in ``E_cl``.
        """
        u, jet = _control(q, ref.q, v, ref.v, ref.a, self.nav, self.emap, self.gains,
                          self.kernel, self.jet_eps)
        if jet is None:
            e = self.emap.error_at(q, ref.q)
            dv = v - ref.v
            return u, e, np.zeros_like(e), self.gains.k_p * self.nav.value_at(e) + 0.5 * float(dv @ dv)
        e_dot = error_velocity(jet, v, ref.v)
        e_cl = self.gains.k_p * self.nav.value_at(jet.e) + 0.5 * float(e_dot @ e_dot)
        return u, jet.e, e_dot, e_cl
