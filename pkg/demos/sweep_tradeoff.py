"""
The risk/coverage trade-off, measured
=====================================

Sweeping the exit probability budget over four orders of magnitude and
running a batch of randomized trials at each level shows the two headline
facts about the filter: the observed failure rate stays below the budget,
and permissiveness (distance covered toward the goal) grows as the budget
loosens.

This is a reduced-size run so it finishes in about half a minute; the
acceptance tests run the full-size version.
"""

import os
import time

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

from veloguard.sim import SimParams, sweep

OUT = os.path.join(os.path.dirname(__file__), "out")
os.makedirs(OUT, exist_ok=True)

BUDGETS = (1e-6, 1e-4, 1e-2, 0.1, 0.3)
params = SimParams(trials=30, steps=800)

t0 = time.monotonic()
points = sweep(BUDGETS, params, n_jobs=4)
print("ran %d x %d trials in %.1f s"
      % (len(BUDGETS), params.trials, time.monotonic() - t0))
print()
print("%-10s %-12s %-16s %s" % ("P", "p_failure", "mean distance", "stderr"))
for pt in points:
    print("%-10g %-12g %-16.3f %.3f"
          % (pt.P, pt.p_failure, pt.mean_distance, pt.stderr_distance))

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10.0, 4.0))
ax1.loglog(BUDGETS, [max(pt.p_failure, 1e-7) for pt in points], "o-",
           label="observed failure rate")
ax1.loglog(BUDGETS, BUDGETS, "k--", lw=0.9, label="budget (y = x)")
ax1.set_xlabel("budget P")
ax1.set_ylabel("failure rate")
ax1.legend(fontsize=8)
ax1.set_title("failures stay below the budget")

ax2.errorbar([pt.P for pt in points], [pt.mean_distance for pt in points],
             yerr=[pt.stderr_distance for pt in points], fmt="o-", capsize=3)
ax2.set_xscale("log")
ax2.set_xlabel("budget P")
ax2.set_ylabel("mean distance toward goal (m)")
ax2.set_title("loose budgets buy progress")

fig.tight_layout()
path = os.path.join(OUT, "sweep_tradeoff.png")
fig.savefig(path, dpi=130)
print()
print("wrote", path)
