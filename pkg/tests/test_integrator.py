from __future__ import annotations

import numpy as np
import pytest

from agat.controller import AgatController, Gains
from agat.errormap import SphereErrorMap
from agat.errors import NonFiniteDerivative
from agat.integrator import (DummyReference, EmbeddedClosedLoop, StaticReference, rk4_step,
                             simulate, step_and_project)
from agat.manifold import Sphere
from agat.navigation import sphere_height

S2 = Sphere()


def test_rk4_zero_field_keeps_state():
    y = np.array([1.0, -2.0])
    np.testing.assert_array_equal(rk4_step(lambda t, y: np.zeros_like(y), 0.0, y, 0.1), y)


def test_rk4_exponential_step():
    y = rk4_step(lambda t, y: y, 0.0, np.array([1.0]), 0.1)
    assert abs(y[0] - 1.105170918) < 9e-8
    assert abs(y[0] - np.exp(0.1)) < 1e-7


def test_rk4_rejects_bad_step_and_nonfinite_field():
    with pytest.raises(ValueError):
        rk4_step(lambda t, y: y, 0.0, np.ones(1), 0.0)
    with pytest.raises(NonFiniteDerivative):
        rk4_step(lambda t, y: np.full_like(y, np.inf), 0.0, np.ones(1), 0.1)


def test_rk4_global_order_is_four():
    def solve(dt):
        y = np.array([1.0])
        for k in range(int(round(1.0 / dt))):
            y = rk4_step(lambda t, y: -y, k * dt, y, dt)
        return abs(y[0] - np.exp(-1.0))
    assert solve(0.02) / solve(0.01) == pytest.approx(16.0, abs=1.0)


def _free_sphere(q0, v0):
    loop = EmbeddedClosedLoop(S2, StaticReference(np.array([0.0, 0.0, -1.0])))
    return loop, loop.initial(np.asarray(q0, float), np.asarray(v0, float))


def test_great_circle_after_quarter_period():
    loop, y0 = _free_sphere([0, 0, 1], [1, 0, 0])
    log = simulate(loop, y0, np.pi / 2, np.pi / 2 / 1571)
    q, v = log.block("q")[-1], log.block("v")[-1]
    np.testing.assert_allclose(q, [1, 0, 0], atol=1e-5)
    np.testing.assert_allclose(v, [0, 0, -1], atol=1e-5)


def test_projection_is_nearly_inactive_on_exact_states():
    loop, y0 = _free_sphere([0, 0, 1], [1, 0, 0])
    dt = 1e-3
    raw = rk4_step(loop.derivative, 0.0, y0, dt)
    projected = loop.project(raw)
    assert np.linalg.norm(projected[:3] - raw[:3]) < 1e-13


def test_step_and_project_reports_monitors():
    loop, y0 = _free_sphere([0, 0, 1], [1, 0, 0])
    y, mon = step_and_project(loop, 0.0, y0, 1e-3)
    assert mon.constraint_residual < 1e-14
    assert mon.energy == pytest.approx(0.5, rel=1e-12)
    assert mon.effort == 0.0


def test_zero_duration_gives_single_row():
    loop, y0 = _free_sphere([0, 0, 1], [1, 0, 0])
    log = simulate(loop, y0, 0.0, 1e-3)
    assert len(log) == 1
    assert log.status == "ok"


def test_simulate_rejects_bad_arguments():
    loop, y0 = _free_sphere([0, 0, 1], [1, 0, 0])
    with pytest.raises(ValueError):
        simulate(loop, y0, -1.0, 1e-3)
    with pytest.raises(ValueError):
        simulate(loop, y0, 1.0, 0.0)


def test_abort_keeps_partial_log():
    # the plant starts exactly antipodal to a resting reference
    ctrl = AgatController(sphere_height(S2), SphereErrorMap(S2), Gains(1.0, -1.0))
    ref = DummyReference(S2, np.array([0.0, 0.0, 1.0]), np.zeros(3), np.zeros(3))
    loop = EmbeddedClosedLoop(S2, ref, ctrl)
    log = simulate(loop, loop.initial(np.array([0.0, 0.0, -1.0]), np.zeros(3)), 1.0, 1e-3)
    assert log.status == "aborted"
    assert "SingularPair" in log.message
    assert len(log) == 0


def test_closed_loop_log_layout_and_monotone_energy():
    ctrl = AgatController(sphere_height(S2), SphereErrorMap(S2), Gains(4.0, -5.7))
    q_r = np.array([1.0, 1.0, 1.0]) / np.sqrt(3)
    ref = DummyReference(S2, q_r, S2.project_at(q_r, np.array([3.0, 0, -3.0])),
                         np.array([1.0, 2.0, 1.0]))
    loop = EmbeddedClosedLoop(S2, ref, ctrl)
    log = simulate(loop, loop.initial(np.array([0.0, -1.0, 0.0]), np.array([1.0, 0, 2.0])), 1.0)
    assert len(log) == 1001
    assert log.columns[:4] == ["t", "q0", "q1", "q2"]
    assert log.lyapunov_violations == 0
    assert np.all(np.diff(log.column("e_cl")) <= 1e-6 * 1e-3)
    assert log.column("residual").max() < 1e-8
