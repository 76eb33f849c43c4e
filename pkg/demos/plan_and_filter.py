"""
Grid planning with a stochastic safety filter underneath
========================================================

The planner and the filter are deliberately decoupled.  A* produces
waypoints on a coarse occupancy grid, a pursuit rule turns them into
velocity commands, and the filter reshapes those commands online against
the true obstacle geometry and the current disturbance estimate.  Even a
path that clips an inflated corner stays safe, because safety lives in the
filter, not in the plan.
"""

import math
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from veloguard.barrier import BarrierConfig, Obstacle, ObstacleSet
from veloguard.disturbance import build_model
from veloguard.planner import (astar, consume_reached, grid_from_obstacles,
                               nominal_velocity, path_to_points)
from veloguard.risk import RiskBudget
from veloguard.rom import Disturbance, RomState, step
from veloguard.safety_filter import FilterConfig, filter_step, init_filter_state

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

DT = 0.01
SPEED = 0.5

obstacles = ObstacleSet([
    Obstacle(center=(1.6, 0.25), combined_radius=0.55),
    Obstacle(center=(3.1, -0.55), combined_radius=0.5),
    Obstacle(center=(4.4, 0.5), combined_radius=0.45),
])

# plan on a grid inflated by a planning margin; the filter does not care
# about this margin, it works with the true radii
margin = 0.12
inflated = [Obstacle(center=o.center, combined_radius=o.combined_radius + margin)
            for o in obstacles.items]
grid = grid_from_obstacles(inflated, bounds=(-0.5, 6.5, -2.0, 2.0),
                           resolution=0.1)
start, goal = (0.0, 0.0), (6.0, 0.0)
path = astar(grid, grid.cell_of(start), grid.cell_of(goal))
waypoints = path_to_points(grid, path)
print("planned %d cells, %.2f m of path" % (len(path), 0.1 * len(path)))

model = build_model({"kind": "student_t", "dof": 3.0, "scale": 0.1,
                     "clip_radius": 2.0})
fcfg = FilterConfig(dt=DT, barrier=BarrierConfig(lam=10.0, gamma=0.5),
                    risk=RiskBudget(P=1e-2, K=10, delta=1.0, sigma=1e-3))
state = init_filter_state(fcfg)
rng = np.random.default_rng(42)

x = RomState(start[0], start[1], 0.0)
remaining = list(waypoints)
trace = [(x.p_x, x.p_y)]
interventions = 0
for k in range(4000):
    remaining = consume_reached(x, remaining)
    u_nom = nominal_velocity(x, remaining, SPEED)
    if u_nom.v_x == 0.0 and u_nom.v_y == 0.0:
        print("arrived after %d steps (%.1f s)" % (k, k * DT))
        break
    u_safe, diag = filter_step(state, x, u_nom, obstacles, fcfg, model)
    interventions += diag.active
    d = model.sample(state.history, rng)
    x = step(x, u_safe, Disturbance(d.d_x, d.d_y, d.d_theta), DT)
    trace.append((x.p_x, x.p_y))
else:
    print("did not arrive; %.2f m to go"
          % math.hypot(x.p_x - goal[0], x.p_y - goal[1]))

trace = np.array(trace)
print("filter interventions: %d of %d steps" % (interventions, len(trace) - 1))
print("accumulated exit-probability ledger: %.4g over %d intervals"
      % (state.ledger.total(), state.ledger.F))

fig, ax = plt.subplots(figsize=(8.0, 3.6))
for o in obstacles.items:
    ax.add_patch(plt.Circle(o.center, o.combined_radius, color="0.75"))
    ax.add_patch(plt.Circle(o.center, o.combined_radius + margin, fill=False,
                            ls=":", color="0.55", lw=0.8))
wp = np.array(waypoints)
ax.plot(wp[:, 0], wp[:, 1], "o-", ms=2.5, lw=0.9, color="tab:orange",
        label="A* waypoints")
ax.plot(trace[:, 0], trace[:, 1], lw=1.5, color="tab:blue",
        label="filtered execution")
ax.plot(*start, "ks", ms=6)
ax.plot(*goal, "k*", ms=10)
ax.set_aspect("equal")
ax.set_xlim(-0.5, 6.5)
ax.set_ylim(-1.6, 1.6)
ax.legend(fontsize=8, loc="lower right")
ax.set_title("plan coarsely, filter exactly")
fig.tight_layout()
out = os.path.join(OUT, "plan_and_filter.png")
fig.savefig(out, dpi=130)
print("wrote", out)
