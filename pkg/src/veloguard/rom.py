"""Reduced-order model: planar single-integrator state, commands, disturbances,
and the rolling history window used to condition disturbance models."""

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def _require_finite(*values):
    for v in values:
        if not math.isfinite(v):
            raise ValueError("non-finite value in reduced-order model input")


@dataclass(frozen=True)
class RomState:
    """Planar position plus yaw. theta is kept in [0, 2*pi)."""

    p_x: float
    p_y: float
    theta: float


@dataclass(frozen=True)
class Command:
    """Velocity-level input (v_x, v_y, omega)."""

    v_x: float
    v_y: float
    omega: float


ZERO_COMMAND = Command(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class Disturbance:
    """Velocity-level dynamics residual. Position-level effect is dt * d."""

    d_x: float
    d_y: float
    d_theta: float


ZERO_DISTURBANCE = Disturbance(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class HistoryWindow:
    """Last-N (state, command) pairs, oldest first."""

    states: tuple
    commands: tuple
    capacity: int

    def __len__(self):
        return len(self.states)


def make_window(capacity: int) -> HistoryWindow:
    if capacity < 1:
        raise ValueError("window capacity must be >= 1")
    return HistoryWindow(states=(), commands=(), capacity=capacity)


def push_history(w: HistoryWindow, x: RomState, u: Command) -> HistoryWindow:
    """Append one (state, command) pair, evicting the oldest beyond capacity."""
    states = w.states + (x,)
    commands = w.commands + (u,)
    if len(states) > w.capacity:
        states = states[-w.capacity:]
        commands = commands[-w.capacity:]
    return HistoryWindow(states=states, commands=commands, capacity=w.capacity)


def wrap_angle(theta: float) -> float:
    """Wrap to [0, 2*pi). Python's float mod already takes the divisor's sign."""
    t = theta % TWO_PI
    # theta % TWO_PI can return TWO_PI itself when theta is a tiny negative number
    if t >= TWO_PI:
        t -= TWO_PI
    return t


def step(x: RomState, u: Command, d: Disturbance, dt: float) -> RomState:
    """One Euler step x + dt * (u + d), yaw wrapped to [0, 2*pi)."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    _require_finite(x.p_x, x.p_y, x.theta, u.v_x, u.v_y, u.omega,
                    d.d_x, d.d_y, d.d_theta, dt)
    return RomState(
        p_x=x.p_x + dt * (u.v_x + d.d_x),
        p_y=x.p_y + dt * (u.v_y + d.d_y),
        theta=wrap_angle(x.theta + dt * (u.omega + d.d_theta)),
    )
