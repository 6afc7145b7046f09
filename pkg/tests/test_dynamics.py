import math

import numpy as np
import pytest

from quadpend import geom
from quadpend.dynamics import (
    ControlInput,
    ParameterError,
    PhysicalParams,
    SystemState,
    attitude_rhs,
    coupled_rhs,
    hover_state,
    pendulum_rhs,
    translation_rhs,
    z_of,
)
from quadpend.geom import E1, E3, I3
from quadpend.presets import R0

P = PhysicalParams()


def random_state(rng):
    y = rng.normal(size=3)
    y /= np.linalg.norm(y)
    return SystemState(
        rng.normal(size=3),
        rng.normal(size=3),
        geom.exp_so3(rng.normal(size=3)),
        rng.normal(size=3),
        y,
        geom.tangent_project(y, rng.normal(size=3)),
    )


def test_params_defaults_and_validation():
    assert (P.M, P.m, P.l, P.g, P.d, P.c) == (0.4, 0.1, 0.5, 9.81, 0.2, 0.01)
    assert np.array_equal(P.inertia, np.diag([0.0820, 0.0845, 0.1377]))
    assert P.hover_thrust == pytest.approx(-4.905)
    for key in ("M", "m", "l", "g", "d", "c"):
        with pytest.raises(ParameterError) as exc:
            PhysicalParams(**{key: -1.0})
        assert exc.value.key == key
    with pytest.raises(ParameterError):
        PhysicalParams(inertia=np.diag([1.0, -1.0, 1.0]))
    with pytest.raises(ParameterError):
        PhysicalParams(inertia=np.array([[1.0, 0.1, 0], [0, 1, 0], [0, 0, 1]]))


def test_z_of_examples():
    assert np.array_equal(z_of(I3), E3)
    assert np.allclose(z_of(geom.exp_so3(np.array([0.0, math.pi / 2, 0.0]))), E1, atol=1e-15)
    assert np.array_equal(z_of(R0), [-0.8, 0.0, 0.60])


def test_attitude_rhs_examples():
    assert np.array_equal(attitude_rhs(np.array([2.5, 0.0, 0.0]), np.zeros(3), P), np.zeros(3))
    out = attitude_rhs(np.array([0.0, 1.0, 1.0]), np.zeros(3), P)
    assert np.allclose(out, [-0.0532 / 0.0820, 0.0, 0.0], atol=1e-12)
    assert out[0] == pytest.approx(-0.6488, abs=1e-4)
    mu = np.array([0.1, -0.2, 0.3])
    assert np.allclose(attitude_rhs(np.zeros(3), mu, P), -np.linalg.solve(P.inertia, mu))


def test_pendulum_rhs_examples(rng):
    yd = np.array([0.3, -0.4, 0.0])
    assert np.allclose(pendulum_rhs(E3, yd, -3.0, E3, P), -0.25 * E3)
    Ml = P.M * P.l
    assert np.allclose(pendulum_rhs(E1, np.zeros(3), Ml, E3, P), -E3)
    for _ in range(100):
        s = random_state(rng)
        ydd = pendulum_rhs(s.y, s.ydot, rng.normal(), s.z, P)
        assert np.dot(s.y, ydd) == pytest.approx(-np.dot(s.ydot, s.ydot), abs=1e-12)


def test_translation_rhs_examples():
    hover = hover_state()
    k_p = (P.M + P.m) * P.g / (P.M * P.l)
    assert np.allclose(translation_rhs(hover, -P.M * P.l * k_p, np.zeros(3), P), 0.0, atol=1e-15)
    assert np.array_equal(translation_rhs(hover, 0.0, np.zeros(3), P), P.g * E3)
    assert np.allclose(translation_rhs(hover, -4.905, np.zeros(3), P), 0.0, atol=1e-15)


def test_coupled_rhs_examples(rng):
    s = hover_state(xdot=(0.5, -1.0, 2.0))
    d = coupled_rhs(s, ControlInput(-(P.M + P.m) * P.g, np.zeros(3)), P)
    assert np.array_equal(d.xdot, s.xdot)
    for part in (d.Rdot, d.omegadot, d.ydot, d.yddot):
        assert np.allclose(part, 0.0, atol=1e-15)
    assert np.allclose(d.xddot, 0.0, atol=1e-15)

    free = coupled_rhs(SystemState(np.zeros(3), np.zeros(3), I3, np.zeros(3), E1, np.array([0, 2.0, 0])),
                       ControlInput(0.0, np.zeros(3)), P)
    assert np.allclose(free.yddot, -4.0 * E1)
    # pivot and bob accelerations combine to gravity when f = 0
    assert np.allclose((P.M + P.m) * free.xddot + P.m * P.l * free.yddot, (P.M + P.m) * P.g * E3)

    for _ in range(50):
        st = random_state(rng)
        d = coupled_rhs(st, ControlInput(rng.normal(), rng.normal(size=3)), P)
        assert np.allclose(d.Rdot, st.R @ geom.hat(st.omega))
        assert abs(np.dot(st.y, d.yddot) + np.dot(st.ydot, st.ydot)) < 1e-12


def test_coupled_rhs_deterministic(rng):
    st = random_state(rng)
    u = ControlInput(-3.0, rng.normal(size=3))
    a, b = coupled_rhs(st, u, P), coupled_rhs(st, u, P)
    for key in ("xdot", "xddot", "Rdot", "omegadot", "ydot", "yddot"):
        assert np.array_equal(getattr(a, key), getattr(b, key))


def test_state_helpers(rng):
    st = random_state(rng)
    assert st.is_valid()
    assert np.array_equal(st.z, st.R[:, 2])
    assert np.allclose(st.zdot, st.R @ np.cross(st.omega, E3))
    assert st.flat().shape == (24,)
    assert not st.replace(y=2 * st.y).is_valid()
