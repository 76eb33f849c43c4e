"""Reduced-order model: Euler stepping, yaw wrapping, history window."""

import math

import numpy as np
import pytest

from veloguard import (Command, Disturbance, RomState, make_window,
                       push_history, step, wrap_angle)
from veloguard.rom import ZERO_COMMAND, ZERO_DISTURBANCE


def test_step_single_euler():
    x = step(RomState(0.0, 0.0, 0.0), Command(1.0, 0.0, 0.0),
             ZERO_DISTURBANCE, 0.01)
    assert x == RomState(0.01, 0.0, 0.0)


def test_step_fixed_point():
    x = RomState(0.0, 0.0, 0.0)
    assert step(x, ZERO_COMMAND, ZERO_DISTURBANCE, 0.01) == x


def test_step_wraps_theta():
    # (6.28 + 0.01) mod 2*pi, frozen from a 40-digit evaluation
    x = step(RomState(0.0, 0.0, 6.28), Command(0.0, 0.0, 1.0),
             ZERO_DISTURBANCE, 0.01)
    assert abs(x.theta - 0.006814692820413523) < 1e-15


def test_step_rejects_nonfinite():
    with pytest.raises(ValueError):
        step(RomState(math.nan, 0.0, 0.0), ZERO_COMMAND, ZERO_DISTURBANCE, 0.01)
    with pytest.raises(ValueError):
        step(RomState(0.0, 0.0, 0.0), Command(math.inf, 0.0, 0.0),
             ZERO_DISTURBANCE, 0.01)


def test_step_rejects_nonpositive_dt():
    with pytest.raises(ValueError):
        step(RomState(0.0, 0.0, 0.0), ZERO_COMMAND, ZERO_DISTURBANCE, 0.0)
    with pytest.raises(ValueError):
        step(RomState(0.0, 0.0, 0.0), ZERO_COMMAND, ZERO_DISTURBANCE, -0.1)


def test_wrap_angle_range():
    rng = np.random.default_rng(11)
    for theta in rng.uniform(-50.0, 50.0, size=500):
        w = wrap_angle(float(theta))
        assert 0.0 <= w < 2.0 * math.pi
        # wrapped value differs from the input by a whole number of turns
        k = (theta - w) / (2.0 * math.pi)
        assert abs(k - round(k)) < 1e-9


def test_step_affine_in_command():
    # step(x, u1+u2, d) - step(x, u1, d) = dt*u2 while the wrap stays inactive
    rng = np.random.default_rng(23)
    dt = 0.01
    for _ in range(200):
        x = RomState(*rng.uniform(-5, 5, 2), rng.uniform(1.0, 5.0))
        d = Disturbance(*rng.uniform(-1, 1, 3))
        u1 = Command(*rng.uniform(-1, 1, 3))
        u2 = Command(*rng.uniform(-1, 1, 3))
        u12 = Command(u1.v_x + u2.v_x, u1.v_y + u2.v_y, u1.omega + u2.omega)
        a = step(x, u12, d, dt)
        b = step(x, u1, d, dt)
        assert abs((a.p_x - b.p_x) - dt * u2.v_x) < 1e-12
        assert abs((a.p_y - b.p_y) - dt * u2.v_y) < 1e-12
        assert abs((a.theta - b.theta) - dt * u2.omega) < 1e-12


def test_two_half_steps_compose():
    rng = np.random.default_rng(7)
    for _ in range(200):
        x = RomState(*rng.uniform(-5, 5, 2), rng.uniform(0.5, 5.5))
        u = Command(*rng.uniform(-1, 1, 3))
        half = step(step(x, u, ZERO_DISTURBANCE, 0.005), u, ZERO_DISTURBANCE, 0.005)
        full = step(x, u, ZERO_DISTURBANCE, 0.01)
        assert abs(half.p_x - full.p_x) < 1e-12
        assert abs(half.p_y - full.p_y) < 1e-12
        assert abs(half.theta - full.theta) < 1e-12


def test_push_history_grows():
    w = make_window(4)
    w = push_history(w, RomState(0, 0, 0), ZERO_COMMAND)
    assert len(w) == 1


def test_push_history_evicts_oldest():
    w = make_window(4)
    xs = [RomState(float(i), 0.0, 0.0) for i in range(5)]
    for x in xs:
        w = push_history(w, x, ZERO_COMMAND)
    assert len(w) == 4
    assert w.states == tuple(xs[1:])


def test_push_history_fifo_order():
    w = make_window(4)
    tags = "abcde"
    for i, _ in enumerate(tags):
        w = push_history(w, RomState(float(i), 0.0, 0.0),
                         Command(float(i), 0.0, 0.0))
    assert [s.p_x for s in w.states] == [1.0, 2.0, 3.0, 4.0]
    assert [c.v_x for c in w.commands] == [1.0, 2.0, 3.0, 4.0]


def test_push_history_is_functional():
    w0 = make_window(2)
    w1 = push_history(w0, RomState(1, 1, 0), ZERO_COMMAND)
    assert len(w0) == 0 and len(w1) == 1


def test_make_window_rejects_zero_capacity():
    with pytest.raises(ValueError):
        make_window(0)
