from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agat.controller import (AgatController, Gains, ReferenceSample, agat_control,
                             check_dissipative, closed_loop_energy, error_rhs, error_velocity,
                             feedforward_terms, solve_transport)
from agat.errormap import ErrorJet, LissajousErrorMap, SphereErrorMap, angle_data
from agat.errors import SingularPair
from agat.manifold import Lissajous, Sphere
from agat.navigation import lissajous_height, sphere_height

S2 = Sphere()
L = Lissajous()
SETUPS = {
    "sphere": (S2, sphere_height(S2), SphereErrorMap(S2), Gains(3.7, -4.0)),
    "lissajous": (L, lissajous_height(L), LissajousErrorMap(L), Gains(5.3, -1.6)),
}
seeds = st.integers(0, 2**31 - 1)


def _state(M, rng, min_margin=0.05):
    while True:
        q, qr = M.sample(rng, 2)
        if angle_data(q, qr).beta > min_margin:
            break
    v = M.project_at(q, rng.standard_normal(3))
    vr = M.project_at(qr, rng.standard_normal(3))
    ar = M.project_at(qr, rng.standard_normal(3)) - M.correction(qr, vr)
    return q, qr, v, vr, ar


def _plain(jet) -> ErrorJet:
    """Copy of a jet without the rank-one shortcut, to force the SVD solve."""
    return ErrorJet(jet.e, jet.d1, jet.d2, jet.t11, jet.t21, jet.t12, jet.t22,
                    jet.singularity_margin)


def _error_acceleration(M, jet, q, v, vr, ar, u):
    """Ambient second derivative of ``E(q(t), q_r(t))`` under ``q'' = u - C(q, v)``."""
    return (jet.d1 @ (u - M.correction(q, v)) + jet.d2 @ ar + jet.second_order(v, vr))


# -- oracles -------------------------------------------------------------------

def test_dissipativity_check():
    assert check_dissipative(-4.0)
    assert check_dissipative(0.0)
    assert not check_dissipative(1.0)
    assert check_dissipative(-np.eye(3))
    assert not check_dissipative(np.diag([-1.0, 0.5, -1.0]))


def test_gains_reject_nonpositive_stiffness():
    with pytest.raises(ValueError):
        Gains(0.0, -1.0)


def test_controller_rejects_energy_injecting_damping():
    M, nav, emap, _ = SETUPS["sphere"]
    with pytest.raises(ValueError):
        AgatController(nav, emap, Gains(1.0, 2.0))


def test_error_velocity_vanishes_at_rest():
    jet = SphereErrorMap().jet([1, 0, 0], [0, 1, 0])
    np.testing.assert_allclose(error_velocity(jet, np.zeros(3), np.zeros(3)), 0.0)


def test_error_rhs_oracle_on_equator():
    # E = (1, 0, 0) with zero error velocity: pure gradient descent of the height
    jet = SphereErrorMap().jet([1, 0, 0], [0, 1, 0])
    np.testing.assert_allclose(jet.e, [1, 0, 0])
    rhs = error_rhs(jet, sphere_height(S2), np.zeros(3), np.zeros(3), Gains(3.7, -4.0))
    np.testing.assert_allclose(rhs, [0, 0, -3.7], atol=1e-15)


def test_error_rhs_pure_gradient_without_damping():
    jet = LissajousErrorMap().jet(L.sample(np.random.default_rng(1), 1)[0],
                                  L.sample(np.random.default_rng(2), 1)[0])
    nav = lissajous_height(L)
    v = np.zeros(3)
    rhs = error_rhs(jet, nav, v, v, Gains(2.0, 0.0))
    np.testing.assert_allclose(rhs, -2.0 * nav.gradient_at(jet.e), atol=1e-14)


def test_feedforward_vanishes_at_rest():
    jet = SphereErrorMap().jet([1, 0, 0], [0, 1, 0])
    z = np.zeros(3)
    np.testing.assert_allclose(feedforward_terms(jet, z, z, z), 0.0)


def test_control_is_zero_on_reference_at_rest():
    M, nav, emap, gains = SETUPS["sphere"]
    q = np.array([0.0, 0.6, 0.8])
    z = np.zeros(3)
    np.testing.assert_allclose(agat_control(q, q, z, z, z, nav, emap, gains), 0.0)


def test_coincident_fallback_tracks_reference_acceleration():
    M, nav, emap, gains = SETUPS["sphere"]
    q = np.array([0.0, 0.6, 0.8])
    a = np.array([1.0, 0.0, 0.0])
    v = np.array([0.0, 0.8, -0.6])
    u = agat_control(q, q, v, v, a, nav, emap, gains)
    np.testing.assert_allclose(u, a)


def test_antipodal_pair_raises():
    M, nav, emap, gains = SETUPS["sphere"]
    q = np.array([1.0, 0.0, 0.0])
    z = np.zeros(3)
    with pytest.raises(SingularPair):
        agat_control(q, -q, z, z, z, nav, emap, gains)


# -- properties ----------------------------------------------------------------

@pytest.mark.parametrize("name", SETUPS)
@given(seed=seeds)
def test_control_realises_damped_gradient_error_dynamics(name, seed):
    M, nav, emap, gains = SETUPS[name]
    q, qr, v, vr, ar = _state(M, np.random.default_rng(seed))
    u = agat_control(q, qr, v, vr, ar, nav, emap, gains)
    jet = emap.jet(q, qr)
    e_ddot = _error_acceleration(M, jet, q, v, vr, ar, u)
    target = error_rhs(jet, nav, v, vr, gains)
    scale = 1.0 + np.linalg.norm(target) + np.linalg.norm(e_ddot)
    np.testing.assert_allclose(M.project_at(jet.e, e_ddot), target, atol=1e-9 * scale)
    # u is tangent at q
    np.testing.assert_allclose(u - M.project_at(q, u), 0.0, atol=1e-9 * (1 + np.linalg.norm(u)))


@pytest.mark.parametrize("name", SETUPS)
@given(seed=seeds)
def test_closed_loop_energy_rate_is_damping_power(name, seed):
    # dE_cl/dt = k_p <dpsi, E'> + <E', E''> = k_d |E'|^2
    M, nav, emap, gains = SETUPS[name]
    q, qr, v, vr, ar = _state(M, np.random.default_rng(seed))
    jet = emap.jet(q, qr)
    u = agat_control(q, qr, v, vr, ar, nav, emap, gains)
    e_dot = error_velocity(jet, v, vr)
    rate = (gains.k_p * float(nav.differential_at(jet.e) @ e_dot)
            + float(e_dot @ _error_acceleration(M, jet, q, v, vr, ar, u)))
    expected = gains.k_d * float(e_dot @ e_dot)
    assert rate == pytest.approx(expected, abs=1e-8 * (1 + abs(expected) + np.linalg.norm(u)))
    assert expected <= 0


@pytest.mark.parametrize("name", SETUPS)
@given(seed=seeds)
def test_fused_path_matches_general_path(name, seed):
    M, nav, emap, gains = SETUPS[name]
    q, qr, v, vr, ar = _state(M, np.random.default_rng(seed))
    u_fast = agat_control(q, qr, v, vr, ar, nav, emap, gains)
    matrix_gains = Gains(gains.k_p, gains.k_d * np.eye(3))
    u_general = agat_control(q, qr, v, vr, ar, nav, emap, matrix_gains)
    np.testing.assert_allclose(u_fast, u_general, atol=1e-9 * (1 + np.linalg.norm(u_fast)))


@pytest.mark.parametrize("name", SETUPS)
@given(seed=seeds)
def test_rank_one_solve_matches_svd_solve(name, seed):
    M, nav, emap, gains = SETUPS[name]
    q, qr, v, vr, ar = _state(M, np.random.default_rng(seed))
    jet = emap.jet(q, qr)
    rhs = error_rhs(jet, nav, v, vr, gains)
    u1, K1 = solve_transport(M, q, jet, rhs)
    u2, K2 = solve_transport(M, q, _plain(jet), rhs)
    np.testing.assert_allclose(u1, u2, atol=1e-9 * (1 + np.linalg.norm(u1)))
    np.testing.assert_allclose(K1, K2, atol=1e-9)
    np.testing.assert_allclose(jet.d1 @ u1, rhs, atol=1e-9 * (1 + np.linalg.norm(rhs)))


@given(seed=seeds)
def test_kernel_damping_only_touches_invisible_directions(seed):
    M, nav, emap, gains = SETUPS["sphere"]
    q, qr, v, vr, ar = _state(M, np.random.default_rng(seed))
    u_damp = agat_control(q, qr, v, vr, ar, nav, emap, gains, kernel="damp")
    u_min = agat_control(q, qr, v, vr, ar, nav, emap, gains, kernel="min_norm")
    jet = emap.jet(q, qr)
    np.testing.assert_allclose(jet.d1 @ (u_damp - u_min), 0.0,
                               atol=1e-9 * (1 + np.linalg.norm(u_damp)))


@given(seed=seeds)
def test_controller_evaluate_is_consistent(seed):
    M, nav, emap, gains = SETUPS["lissajous"]
    q, qr, v, vr, ar = _state(M, np.random.default_rng(seed))
    ctrl = AgatController(nav, emap, gains)
    u, e, e_dot, e_cl = ctrl.evaluate(q, v, ReferenceSample(qr, vr, ar))
    np.testing.assert_array_equal(u, ctrl(q, v, ReferenceSample(qr, vr, ar)))
    assert e_cl == pytest.approx(closed_loop_energy(emap.jet(q, qr), nav, v, vr, gains.k_p),
                                 rel=1e-12)
