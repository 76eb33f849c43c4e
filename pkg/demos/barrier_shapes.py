"""
Barrier shapes along the obstacle direction
===========================================

The filter never works with the raw signed distance.  It works with a
saturating transform of it, and near the active obstacle it swaps in a
concave one-dimensional surrogate evaluated along the unit direction e from
the obstacle center to the robot.  This script draws both and shows the
curvature budget that the variance tightening consumes.
"""

import math
import os

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from veloguard.barrier import (BarrierConfig, DirectionalBarrier, Obstacle,
                               ObstacleSet, h_smooth, h_tilde_q_array,
                               lambda_max)

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

cfg = BarrierConfig(lam=10.0, gamma=0.5)
radius = 0.68
obstacle = Obstacle(center=(0.0, 0.0), combined_radius=radius)
obstacles = ObstacleSet([obstacle])
bar = DirectionalBarrier(obstacle=obstacle, e=(1.0, 0.0), config=cfg)

# walk along the ray through the obstacle center; q is the coordinate of the
# robot position projected on e, so q = radius is the safety boundary
q = np.linspace(-1.5, 6.0, 1200)
h_dir = h_tilde_q_array(q, radius, cfg)
h_ref = np.array([h_smooth((qi, 0.0), obstacles, cfg) for qi in q])

# curvature by central differences; the analytic bound is attained just
# right of the branch switch at q = 0
eps = 1e-3
curv = (h_tilde_q_array(q + eps, radius, cfg)
        - 2.0 * h_dir + h_tilde_q_array(q - eps, radius, cfg)) / eps ** 2
bound = lambda_max(bar)

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.5, 4.2))
ax1.plot(q, h_ref, label="saturating distance transform", lw=1.2)
ax1.plot(q, h_dir, label="directional concave surrogate", lw=1.8)
ax1.axvline(radius, color="k", ls=":", lw=0.8)
ax1.axvline(0.0, color="grey", ls=":", lw=0.8)
ax1.annotate("boundary", (radius, 0.0), textcoords="offset points",
             xytext=(6, -14), fontsize=8)
ax1.annotate("branch switch", (0.0, h_tilde_q_array(0.0, radius, cfg)),
             textcoords="offset points", xytext=(6, 6), fontsize=8)
ax1.set_xlabel("offset q along e (m)")
ax1.set_ylabel("barrier value")
ax1.legend(fontsize=8)
ax1.set_title("surrogate minorizes the smoothed field on its ray")

ax2.plot(q, np.abs(curv), lw=1.2, label="|second difference|")
ax2.axhline(bound, color="r", ls="--", lw=1.0,
            label="curvature bound %.3f" % bound)
ax2.set_xlabel("offset q along e (m)")
ax2.set_ylabel("|curvature|")
ax2.legend(fontsize=8)
ax2.set_title("curvature stays below the Jensen constant")

fig.tight_layout()
path = os.path.join(OUT, "barrier_shapes.png")
fig.savefig(path, dpi=130)
print("wrote", path)

# a few spot values worth knowing by heart
print("value at the boundary:   %.6f" % h_tilde_q_array(radius, radius, cfg))
print("saturation level:        %.1f" % cfg.lam)
print("curvature bound:         %.6f  (gamma^2 lam e^{gamma R} = %.6f)"
      % (bound, cfg.gamma ** 2 * cfg.lam * math.exp(cfg.gamma * radius)))
