from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from agat.errors import NotTangent, OffManifold, RetractionFailed
from agat.manifold import (EmbeddedManifold, Lissajous, Sphere, lissajous_curve,
                           lissajous_curve_ddot, lissajous_curve_dot)

S2 = Sphere()
L = Lissajous()
params = st.floats(-np.pi, np.pi, allow_nan=False)
seeds = st.integers(0, 2**31 - 1)


def _generic_projector(M: EmbeddedManifold, x):
    # reference implementation through the base-class QR path
    return EmbeddedManifold.projector(M, x)


# -- oracles -------------------------------------------------------------------

def test_sphere_projection_of_tangent_vector():
    np.testing.assert_allclose(S2.project_tangent([0, 0, 1], [1, 0, 0]), [1, 0, 0])


def test_sphere_projection_of_normal_vector():
    np.testing.assert_allclose(S2.project_tangent([0, 0, 1], [0, 0, 5]), [0, 0, 0])


def test_lissajous_projection_at_one_zero_zero():
    np.testing.assert_allclose(L.project_tangent([1, 0, 0], [0, 1, 0]), [0, 4 / 13, 6 / 13],
                               atol=1e-15)


def test_sphere_normal_parts():
    np.testing.assert_allclose(S2.project_normal([0, 0, 1], [0, 0, 5]), [0, 0, 5])
    np.testing.assert_allclose(S2.project_normal([0, 0, 1], [1, 0, 0]), [0, 0, 0])


def test_lissajous_normal_part_at_one_zero_zero():
    np.testing.assert_allclose(L.project_normal([1, 0, 0], [0, 1, 0]), [0, 9 / 13, -6 / 13],
                               atol=1e-15)


def test_lissajous_jacobian_at_one_zero_zero():
    np.testing.assert_allclose(L.constraint_jacobian(np.array([1.0, 0, 0])),
                               [[2, 0, 0], [0, 3, -2]])


def test_sphere_retraction_normalises():
    np.testing.assert_allclose(S2.retract([0, 0, 2]).x, [0, 0, 1])


def test_sphere_retraction_rejects_origin():
    with pytest.raises(RetractionFailed):
        S2.retract([0, 0, 0])


def test_lissajous_retraction_fixes_on_curve_point():
    x = lissajous_curve(0.7)
    np.testing.assert_allclose(L.retract(x).x, x, atol=1e-15)


def test_lissajous_retraction_of_perturbed_point(rng):
    x = lissajous_curve(1.3)
    N = L.normal_basis(x)
    y = x + N @ rng.standard_normal(2) * 1e-4
    r = L.retract(y).x
    assert np.max(np.abs(L.constraint(r))) < 1e-9
    assert np.linalg.norm(r - y) < 1e-3


def test_sphere_correction_is_speed_squared_times_position():
    np.testing.assert_allclose(S2.connection_correction([0, 0, 1], [1, 0, 0]), [0, 0, 1])


@pytest.mark.parametrize("M, x", [(S2, np.array([0.0, 0.6, 0.8])), (L, lissajous_curve(0.4))])
def test_correction_vanishes_at_zero_velocity(M, x):
    np.testing.assert_allclose(M.connection_correction(x, np.zeros(3)), 0.0)
    np.testing.assert_allclose(M.geodesic_multipliers(x, np.zeros(3)), 0.0)


def test_lissajous_correction_keeps_constraint_acceleration_zero():
    x, v = np.array([1.0, 0.0, 0.0]), np.array([0.0, 2.0, 3.0])
    a = -L.connection_correction(x, v)
    h_ddot = L.constraint_jacobian(x) @ a + np.einsum("kij,i,j->k", L.constraint_hessians(x), v, v)
    np.testing.assert_allclose(h_ddot, 0.0, atol=1e-9)


def test_certification_rejects_off_manifold_and_normal_input():
    with pytest.raises(OffManifold):
        S2.check_point([0, 0, 1.1])
    with pytest.raises(NotTangent):
        S2.tangent([0, 0, 1], [0, 0, 1])
    with pytest.raises(OffManifold):
        L.point([0.5, 0.5, 0.5])


def test_small_violations_are_repaired_on_request():
    p = S2.point([0, 0, 1 + 1e-6], repair=True)
    assert S2.residual(p) < 1e-12
    t = S2.tangent([0, 0, 1], [1, 0, 1e-6], repair=True)
    np.testing.assert_allclose(t.v, [1, 0, 0])


# -- properties ----------------------------------------------------------------

@given(params)
def test_parameterisation_lies_on_lissajous(t):
    assert L.residual(lissajous_curve(t)) < 1e-12
    assert np.max(np.abs(L.constraint_jacobian(lissajous_curve(t)) @ lissajous_curve_dot(t))) < 1e-12


@given(params)
def test_parameterisation_derivatives_match_finite_differences(t):
    h = 1e-5
    fd = (lissajous_curve(t + h) - lissajous_curve(t - h)) / (2 * h)
    np.testing.assert_allclose(lissajous_curve_dot(t), fd, atol=1e-8)
    fd2 = (lissajous_curve_dot(t + h) - lissajous_curve_dot(t - h)) / (2 * h)
    np.testing.assert_allclose(lissajous_curve_ddot(t), fd2, atol=1e-8)


@given(params)
def test_geodesic_correction_matches_curve_normal_acceleration(t):
    # gamma'' = P gamma'' - correction(gamma, gamma') along any curve on L
    x, v, a = lissajous_curve(t), lissajous_curve_dot(t), lissajous_curve_ddot(t)
    np.testing.assert_allclose(a - L.project_at(x, a), -L.correction(x, v), atol=1e-9)


@given(seeds)
def test_projectors_are_idempotent_and_symmetric(seed):
    rng = np.random.default_rng(seed)
    for M in (S2, L):
        x = M.sample(rng, 1)[0]
        P = M.projector(x)
        np.testing.assert_allclose(P @ P, P, atol=1e-12)
        np.testing.assert_allclose(P, P.T, atol=1e-12)
        np.testing.assert_allclose(P, _generic_projector(M, x), atol=1e-12)
        w = rng.standard_normal(3)
        np.testing.assert_allclose(M.project_at(x, w), P @ w, atol=1e-12)
        np.testing.assert_allclose(M.constraint_jacobian(x) @ (P @ w), 0.0, atol=1e-11)


@given(seeds)
def test_tangent_basis_is_orthonormal_kernel(seed):
    rng = np.random.default_rng(seed)
    for M in (S2, L):
        x = M.sample(rng, 1)[0]
        B = M.tangent_basis(x)
        assert B.shape == (3, M.intrinsic_dim)
        np.testing.assert_allclose(B.T @ B, np.eye(M.intrinsic_dim), atol=1e-12)
        np.testing.assert_allclose(M.constraint_jacobian(x) @ B, 0.0, atol=1e-11)


@given(seeds)
def test_fast_multipliers_match_generic_solve(seed):
    rng = np.random.default_rng(seed)
    x = L.sample(rng, 1)[0]
    v = L.project_at(x, rng.standard_normal(3))
    np.testing.assert_allclose(L.multipliers(x, v), EmbeddedManifold.multipliers(L, x, v),
                               rtol=1e-9, atol=1e-12)


@given(seeds)
def test_sphere_multiplier_is_minus_speed_squared(seed):
    rng = np.random.default_rng(seed)
    x = S2.sample(rng, 1)[0]
    v = S2.project_at(x, rng.standard_normal(3))
    np.testing.assert_allclose(S2.multipliers(x, v), EmbeddedManifold.multipliers(S2, x, v),
                               rtol=1e-12, atol=1e-14)


@given(seeds, st.floats(1e-6, 1e-3))
def test_retraction_returns_to_manifold(seed, size):
    rng = np.random.default_rng(seed)
    for M in (S2, L):
        x = M.sample(rng, 1)[0] + size * rng.standard_normal(3)
        assert M.residual(M.retract(x)) < 1e-9
