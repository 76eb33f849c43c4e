"""Grid A* over the obstacle map and nominal-velocity generation."""

import heapq
import math
from dataclasses import dataclass

import numpy as np

from .rom import Command, RomState

SQRT2 = math.sqrt(2.0)
WAYPOINT_RADIUS = 0.15

_NEIGHBORS = ((1, 0, 1.0), (-1, 0, 1.0), (0, 1, 1.0), (0, -1, 1.0),
              (1, 1, SQRT2), (1, -1, SQRT2), (-1, 1, SQRT2), (-1, -1, SQRT2))


class UnreachableError(RuntimeError):
    """No collision-free path between the requested cells."""


@dataclass(frozen=True)
class GridMap:
    """Occupancy grid; blocked cells are those whose centers fall inside an
    inflated obstacle."""

    resolution: float
    x_min: float
    y_min: float
    blocked: np.ndarray  # (nx, ny) bool

    @property
    def nx(self):
        return self.blocked.shape[0]

    @property
    def ny(self):
        return self.blocked.shape[1]

    def cell_center(self, cell):
        return (self.x_min + (cell[0] + 0.5) * self.resolution,
                self.y_min + (cell[1] + 0.5) * self.resolution)

    def cell_of(self, p):
        return (int(math.floor((p[0] - self.x_min) / self.resolution)),
                int(math.floor((p[1] - self.y_min) / self.resolution)))

    def in_bounds(self, cell):
        return 0 <= cell[0] < self.nx and 0 <= cell[1] < self.ny

    def is_blocked(self, cell):
        return bool(self.blocked[cell[0], cell[1]])


def grid_from_obstacles(obstacles, bounds, resolution=0.1) -> GridMap:
    """Rasterize circular obstacles onto a grid.

    bounds is (x_min, x_max, y_min, y_max); a cell is blocked when its center
    lies within an obstacle's combined radius.
    """
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    x_min, x_max, y_min, y_max = bounds
    if not (x_min < x_max and y_min < y_max):
        raise ValueError("empty map bounds")
    nx = max(1, int(math.ceil((x_max - x_min) / resolution)))
    ny = max(1, int(math.ceil((y_max - y_min) / resolution)))
    xs = x_min + (np.arange(nx) + 0.5) * resolution
    ys = y_min + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    blocked = np.zeros((nx, ny), dtype=bool)
    for o in obstacles:
        blocked |= np.hypot(gx - o.center[0], gy - o.center[1]) <= o.combined_radius
    return GridMap(resolution=resolution, x_min=x_min, y_min=y_min, blocked=blocked)


def _octile(a, b):
    dx = abs(a[0] - b[0])
    dy = abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def astar(grid: GridMap, start, goal):
    """Shortest 8-connected path between cells.

    Octile heuristic (admissible for unit/sqrt2 step costs); ties broken by
    (f, h, linear cell index) so the result is deterministic.
    """
    for name, cell in (("start", start), ("goal", goal)):
        if not grid.in_bounds(cell):
            raise UnreachableError("%s cell outside the map" % name)
        if grid.is_blocked(cell):
            raise UnreachableError("%s cell is blocked" % name)
    start, goal = tuple(start), tuple(goal)
    ny = grid.ny

    g_cost = {start: 0.0}
    parent = {}
    h0 = _octile(start, goal)
    frontier = [(h0, h0, start[0] * ny + start[1], start)]
    closed = set()
    while frontier:
        _, _, _, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        if cell == goal:
            path = [cell]
            while cell in parent:
                cell = parent[cell]
                path.append(cell)
            path.reverse()
            return path
        closed.add(cell)
        cg = g_cost[cell]
        for dx, dy, w in _NEIGHBORS:
            nxt = (cell[0] + dx, cell[1] + dy)
            if not grid.in_bounds(nxt) or grid.is_blocked(nxt) or nxt in closed:
                continue
            ng = cg + w
            if ng < g_cost.get(nxt, math.inf):
                g_cost[nxt] = ng
                parent[nxt] = cell
                hh = _octile(nxt, goal)
                heapq.heappush(frontier, (ng + hh, hh, nxt[0] * ny + nxt[1], nxt))
    raise UnreachableError("no path between start and goal")


def path_to_points(grid: GridMap, path):
    return [grid.cell_center(c) for c in path]


def nominal_velocity(x: RomState, path_points, speed: float,
                     radius=WAYPOINT_RADIUS) -> Command:
    """Head toward the first waypoint farther than the acceptance radius.

    path_points must be the remaining waypoints (callers drop the ones already
    reached).  With no waypoint beyond the radius the command is zero.
    """
    if speed <= 0.0:
        raise ValueError("speed must be positive")
    if not path_points:
        raise ValueError("path must be nonempty")
    for px, py in path_points:
        dx = px - x.p_x
        dy = py - x.p_y
        dist = math.hypot(dx, dy)
        if dist > radius:
            return Command(speed * dx / dist, speed * dy / dist, 0.0)
    return Command(0.0, 0.0, 0.0)


def consume_reached(x: RomState, path_points, radius=WAYPOINT_RADIUS):
    """Drop leading waypoints within the acceptance radius, keeping the last."""
    i = 0
    while i < len(path_points) - 1 and \
            math.hypot(path_points[i][0] - x.p_x, path_points[i][1] - x.p_y) <= radius:
        i += 1
    return path_points[i:]
