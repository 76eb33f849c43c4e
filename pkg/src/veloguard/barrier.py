"""Obstacle barrier functions.

The safe set is the 0-superlevel set of a smoothed signed-distance function
over a union of circular obstacles,

    h_smooth(p) = lam * (1 - exp(-gamma * sdf(p))),

which saturates at lam far from obstacles and falls off steeply inside them.
The filter works with a concave one-dimensional surrogate built along a unit
direction e from the active obstacle to the robot.  Writing q = (p - rho)^T e,
the surrogate is

    h_tilde(q) = lam * (1 - exp(-gamma * (q - R)))          for q >= 0,
    h_tilde(q) = lam * (1 - exp(gamma * R))
                 + gamma * lam * exp(gamma * R) * q         for q < 0,

i.e. the exponential curve continued past q = 0 by its tangent line.  The
tangent extension keeps h_tilde concave and C^1 while capping the curvature,
whose supremum gamma^2 * lam * exp(gamma * R) is the constant used by the
variance tightening in the filter.
"""

import math
from dataclasses import dataclass

import numpy as np

from .rom import RomState

# Argmin ties closer than this pick the lowest obstacle index.
TIE_EPS = 1e-12
UNIT_EPS = 1e-9


class DegenerateDirectionError(ValueError):
    """Raised when the robot sits exactly on an obstacle center, so the
    direction to it is undefined.  Callers fall back to the previous
    direction."""


class InfeasibleLevelError(ValueError):
    """Raised when a requested barrier level is at or above the saturation
    value lam and therefore unreachable."""


@dataclass(frozen=True)
class Obstacle:
    """Circular obstacle.  combined_radius is the obstacle radius plus the
    robot's own radius, so the safe set is distance(center) >= combined_radius."""

    center: tuple
    combined_radius: float

    def __post_init__(self):
        cx, cy = self.center
        if not (math.isfinite(cx) and math.isfinite(cy)):
            raise ValueError("obstacle center must be finite")
        if not self.combined_radius > 0.0:
            raise ValueError("combined_radius must be positive")


class ObstacleSet:
    """Immutable stack of circular obstacles with vectorized queries."""

    def __init__(self, obstacles):
        items = tuple(obstacles)
        if not items:
            raise ValueError("obstacle set must be nonempty")
        self.items = items
        self.centers = np.array([o.center for o in items], dtype=float)
        self.radii = np.array([o.combined_radius for o in items], dtype=float)

    def __len__(self):
        return len(self.items)

    def __getitem__(self, i):
        return self.items[i]


@dataclass(frozen=True)
class BarrierConfig:
    """lam is the saturation magnitude of the barrier, gamma (1/meters) its
    smoothness; both must be positive."""

    lam: float
    gamma: float

    def __post_init__(self):
        if not self.lam > 0.0:
            raise ValueError("lam must be positive")
        if not self.gamma > 0.0:
            raise ValueError("gamma must be positive")


@dataclass(frozen=True)
class DirectionalBarrier:
    """A single obstacle together with the frozen unit direction e from the
    obstacle center toward the robot, along which the concave surrogate is
    evaluated."""

    obstacle: Obstacle
    e: tuple
    config: BarrierConfig

    def __post_init__(self):
        ex, ey = self.e
        n = math.hypot(ex, ey)
        if abs(n - 1.0) > UNIT_EPS:
            raise ValueError("direction e must be a unit vector")


def sdf(p, obstacles: ObstacleSet) -> float:
    """Signed distance to the union of obstacles: min_i ||p - rho_i|| - R_i."""
    d = np.hypot(obstacles.centers[:, 0] - p[0], obstacles.centers[:, 1] - p[1])
    return float(np.min(d - obstacles.radii))


def h_smooth(p, obstacles: ObstacleSet, config: BarrierConfig) -> float:
    """Smoothed barrier lam * (1 - exp(-gamma * sdf(p))).

    Strictly increasing in the signed distance, zero on the safety boundary,
    and bounded above by lam.
    """
    return config.lam * (1.0 - math.exp(-config.gamma * sdf(p, obstacles)))


def h_tilde_q(q: float, R: float, config: BarrierConfig) -> float:
    """Concave surrogate as a function of the scalar offset q = (p - rho)^T e."""
    lam, gamma = config.lam, config.gamma
    if q >= 0.0:
        return lam * (1.0 - math.exp(-gamma * (q - R)))
    edge = lam * (1.0 - math.exp(gamma * R))
    return edge + gamma * lam * math.exp(gamma * R) * q


def h_tilde_q_array(q, R: float, config: BarrierConfig):
    """Vectorized h_tilde_q for batch evaluation."""
    q = np.asarray(q, dtype=float)
    lam, gamma = config.lam, config.gamma
    edge = lam * (1.0 - math.exp(gamma * R))
    slope = gamma * lam * math.exp(gamma * R)
    curved = lam * (1.0 - np.exp(-gamma * (q - R)))
    return np.where(q >= 0.0, curved, edge + slope * q)


def h_tilde(x: RomState, b: DirectionalBarrier) -> float:
    """Concave directional barrier at a state (position components only)."""
    rho = b.obstacle.center
    q = (x.p_x - rho[0]) * b.e[0] + (x.p_y - rho[1]) * b.e[1]
    return h_tilde_q(q, b.obstacle.combined_radius, b.config)


def h_tilde_inverse(v: float, b: DirectionalBarrier) -> float:
    """Offset q at which h_tilde reaches the level v.

    h_tilde is strictly increasing in q with range (-inf, lam), so the inverse
    is well defined for v < lam and splits at the branch junction value
    lam * (1 - exp(gamma * R)) reached at q = 0.
    """
    lam, gamma = b.config.lam, b.config.gamma
    R = b.obstacle.combined_radius
    if v >= lam:
        raise InfeasibleLevelError("level >= lam is above the barrier range")
    edge = lam * (1.0 - math.exp(gamma * R))
    if v >= edge:
        return R - math.log(1.0 - v / lam) / gamma
    return (v - edge) / (gamma * lam * math.exp(gamma * R))


def lambda_max(b: DirectionalBarrier) -> float:
    """Supremum of |d^2 h_tilde / dq^2|, attained at q -> 0+ on the curved
    branch: gamma^2 * lam * exp(gamma * R).  The tangent branch has zero
    curvature."""
    c = b.config
    return c.gamma ** 2 * c.lam * math.exp(c.gamma * b.obstacle.combined_radius)


def closest_obstacle(p, obstacles: ObstacleSet, config: BarrierConfig):
    """Active obstacle selection.

    Returns (index, h_value, e) where index minimizes the per-obstacle barrier
    (equivalently the per-obstacle signed distance), h_value is that obstacle's
    barrier value at p, and e is the unit direction from the obstacle center to
    the robot.  Ties within 1e-12 resolve to the lowest index for determinism.
    """
    dx = p[0] - obstacles.centers[:, 0]
    dy = p[1] - obstacles.centers[:, 1]
    dist = np.hypot(dx, dy)
    margins = dist - obstacles.radii
    best = float(np.min(margins))
    # lowest index among near-ties
    idx = int(np.argmax(margins <= best + TIE_EPS))
    r = float(dist[idx])
    if r == 0.0:
        raise DegenerateDirectionError("robot exactly at obstacle center")
    h = config.lam * (1.0 - math.exp(-config.gamma * float(margins[idx])))
    return idx, h, (float(dx[idx]) / r, float(dy[idx]) / r)
