"""Disturbance-aware tracking corrections applied to reference commands."""

import math

from .rom import Command, Disturbance, RomState


def _wrap_pm_pi(angle: float) -> float:
    # wrap to (-pi, pi] so yaw differences invert the storage wrap of rom.step
    a = math.fmod(angle, 2.0 * math.pi)
    if a > math.pi:
        a -= 2.0 * math.pi
    elif a <= -math.pi:
        a += 2.0 * math.pi
    return a


def optimal_command(x: RomState, x_des_next: RomState, mean_d: Disturbance,
                    dt: float) -> Command:
    """Command that reaches x_des_next in expectation after one step.

    The single-integrator input matrix is dt times the identity, so its
    pseudo-inverse is exact and the expected-tracking optimum is
    (x_des_next - x) / dt - E[d] componentwise.  The yaw difference is
    wrapped to (-pi, pi] first so that states stored with yaw in [0, 2*pi)
    round-trip through rom.step.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    return Command(
        v_x=(x_des_next.p_x - x.p_x) / dt - mean_d.d_x,
        v_y=(x_des_next.p_y - x.p_y) / dt - mean_d.d_y,
        omega=_wrap_pm_pi(x_des_next.theta - x.theta) / dt - mean_d.d_theta,
    )


def adjust_command(u_cmd: Command, mean_d: Disturbance) -> Command:
    """Cancel the expected residual: u_cmd - E[d] componentwise."""
    return Command(
        v_x=u_cmd.v_x - mean_d.d_x,
        v_y=u_cmd.v_y - mean_d.d_y,
        omega=u_cmd.omega - mean_d.d_theta,
    )
