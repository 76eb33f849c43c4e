"""Monte Carlo harness: seeded closed-loop trials, the violation-rate metric,
and the risk-level sweep that exposes the safety/performance trade-off.

Determinism contract: every random quantity in a trial is derived from the
scenario's seed tuple alone, so results are bit-identical across runs and
across parallelism degrees; aggregation is in submission order.
"""

import math
import os
import tempfile
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import rom
from .barrier import BarrierConfig, Obstacle, ObstacleSet, sdf
from .disturbance import build_model
from .risk import RiskBudget
from .rom import Command, RomState
from .safety_filter import (DEFAULT_INPUT_BOX, FilterConfig, filter_step,
                            init_filter_state)


@dataclass(frozen=True)
class ObstacleRandomization:
    """Per-trial obstacle draw: uniform counts, centers, and radii."""

    count_min: int = 2
    count_max: int = 4
    x_range: tuple = (1.5, 8.5)
    y_range: tuple = (-0.9, 0.9)
    radius_range: tuple = (0.3, 0.6)
    start_clearance: float = 0.5
    # Boundary-to-boundary spacing between disks.  The filter constrains the
    # single closest obstacle, so two disks whose standoff shells overlap form
    # a wedge the filter cannot see; 0.7 keeps the corridor between any pair
    # wider than twice the tightest stall distance.
    min_gap: float = 0.7


@dataclass(frozen=True)
class SimParams:
    """Base configuration shared by every trial of a study."""

    dt: float = 0.01
    steps: int = 2000
    trials: int = 100
    speed: float = 0.5
    direction: tuple = (1.0, 0.0)
    start: RomState = RomState(0.0, 0.0, 0.0)
    barrier: BarrierConfig = BarrierConfig(lam=10.0, gamma=0.5)
    k_interval: int = 10
    delta: float = 1.0
    sigma_floor: float = 1e-3
    input_box: tuple = DEFAULT_INPUT_BOX
    history_len: int = 4
    model_spec: dict = field(default_factory=lambda: {
        "kind": "student_t", "dof": 3.0, "scale": 0.1, "clip_radius": 2.0})
    obstacles: object = ObstacleRandomization()
    base_seed: int = 0


@dataclass(frozen=True)
class Scenario:
    """One fully concrete trial: fixed obstacles plus a seed tuple from which
    the disturbance stream is derived."""

    obstacles: ObstacleSet
    start: RomState
    direction: tuple
    speed: float
    dt: float
    steps: int
    model_spec: dict
    seed: tuple
    barrier: BarrierConfig
    risk: RiskBudget
    input_box: tuple = DEFAULT_INPUT_BOX
    history_len: int = 4

    def __post_init__(self):
        if sdf((self.start.p_x, self.start.p_y), self.obstacles) <= 0.0:
            raise ValueError("start state lies inside an inflated obstacle")


@dataclass
class TrialResult:
    states: np.ndarray     # (steps, 3)
    u_cmd: np.ndarray      # (steps, 3)
    u_safe: np.ndarray     # (steps, 3)
    h: np.ndarray          # (steps,)
    alpha: np.ndarray      # (steps,)
    margin: np.ndarray     # (steps,)
    violated: np.ndarray   # (steps,) bool
    violations: int
    distance: float
    ledger_total: float
    ledger_intervals: int

    @property
    def steps(self):
        return len(self.h)


@dataclass(frozen=True)
class TrialSummary:
    distance: float
    violations: int
    steps: int
    ledger_total: float
    ledger_intervals: int


def random_obstacles(spec: ObstacleRandomization, rng, start: RomState) -> ObstacleSet:
    """Draw obstacles uniformly, redrawing any that crowd the start or a
    previously placed disk."""
    count = int(rng.integers(spec.count_min, spec.count_max + 1))
    items = []
    for _ in range(count):
        for _attempt in range(1000):
            cx = rng.uniform(*spec.x_range)
            cy = rng.uniform(*spec.y_range)
            r = rng.uniform(*spec.radius_range)
            if math.hypot(cx - start.p_x, cy - start.p_y) <= r + spec.start_clearance:
                continue
            if any(math.hypot(cx - o.center[0], cy - o.center[1])
                   < r + o.combined_radius + spec.min_gap for o in items):
                continue
            items.append(Obstacle(center=(cx, cy), combined_radius=r))
            break
        else:
            raise RuntimeError("could not place an obstacle clear of the start")
    return ObstacleSet(items)


def make_scenario(params: SimParams, P: float, p_index: int,
                  trial_index: int) -> Scenario:
    """Concrete scenario for one (risk level, trial) pair.

    The seed tuple is (base_seed, p_index, trial_index); obstacles and the
    disturbance stream use independent children of it.
    """
    entropy = (params.base_seed, p_index, trial_index)
    obs_rng = np.random.default_rng(np.random.SeedSequence(entropy).spawn(2)[0])
    if isinstance(params.obstacles, ObstacleRandomization):
        obstacles = random_obstacles(params.obstacles, obs_rng, params.start)
    else:
        obstacles = ObstacleSet(params.obstacles)
    risk = RiskBudget(P=P, K=params.k_interval, delta=params.delta,
                      sigma=params.sigma_floor)
    return Scenario(obstacles=obstacles, start=params.start,
                    direction=params.direction, speed=params.speed,
                    dt=params.dt, steps=params.steps,
                    model_spec=params.model_spec, seed=entropy,
                    barrier=params.barrier, risk=risk,
                    input_box=params.input_box, history_len=params.history_len)


def run_trial(scenario: Scenario) -> TrialResult:
    """Closed-loop rollout: nominal command, filter, then a disturbed step."""
    noise_rng = np.random.default_rng(
        np.random.SeedSequence(scenario.seed).spawn(2)[1])
    model = build_model(scenario.model_spec)
    cfg = FilterConfig(dt=scenario.dt, barrier=scenario.barrier,
                       risk=scenario.risk, input_box=scenario.input_box,
                       history_len=scenario.history_len)
    state = init_filter_state(cfg)
    x = scenario.start
    n = scenario.steps
    u_cmd = Command(scenario.speed * scenario.direction[0],
                    scenario.speed * scenario.direction[1], 0.0)

    states = np.empty((n, 3))
    cmd_log = np.empty((n, 3))
    safe_log = np.empty((n, 3))
    h_log = np.empty(n)
    alpha_log = np.empty(n)
    margin_log = np.empty(n)
    violated = np.zeros(n, dtype=bool)

    for k in range(n):
        u_safe, diag = filter_step(state, x, u_cmd, scenario.obstacles, cfg, model)
        states[k] = (x.p_x, x.p_y, x.theta)
        cmd_log[k] = (u_cmd.v_x, u_cmd.v_y, u_cmd.omega)
        safe_log[k] = (u_safe.v_x, u_safe.v_y, u_safe.omega)
        h_log[k] = diag.h
        alpha_log[k] = diag.alpha
        margin_log[k] = diag.margin
        violated[k] = diag.h < 0.0
        d = model.sample(state.history, noise_rng)
        x = rom.step(x, u_safe, d, scenario.dt)

    dx = x.p_x - scenario.start.p_x
    dy = x.p_y - scenario.start.p_y
    distance = dx * scenario.direction[0] + dy * scenario.direction[1]
    return TrialResult(states=states, u_cmd=cmd_log, u_safe=safe_log, h=h_log,
                       alpha=alpha_log, margin=margin_log, violated=violated,
                       violations=int(violated.sum()), distance=float(distance),
                       ledger_total=state.ledger.total(),
                       ledger_intervals=state.ledger.F)


def run_trial_summary(scenario: Scenario) -> TrialSummary:
    r = run_trial(scenario)
    return TrialSummary(distance=r.distance, violations=r.violations,
                        steps=r.steps, ledger_total=r.ledger_total,
                        ledger_intervals=r.ledger_intervals)


def p_failure(results) -> float:
    """Fraction of (trial, step) samples with a violated barrier."""
    results = list(results)
    if not results:
        raise ValueError("p_failure needs at least one trial")
    total_steps = sum(r.steps for r in results)
    return sum(r.violations for r in results) / total_steps


@dataclass(frozen=True)
class SweepPoint:
    P: float
    p_failure: float
    mean_distance: float
    stderr_distance: float
    distances: tuple
    violations: tuple
    ledger_totals: tuple


def _run_many(scenarios, n_jobs):
    if n_jobs <= 1:
        return [run_trial_summary(s) for s in scenarios]
    chunk = max(1, len(scenarios) // (4 * n_jobs))
    with ProcessPoolExecutor(max_workers=n_jobs) as ex:
        return list(ex.map(run_trial_summary, scenarios, chunksize=chunk))


def sweep(p_values, params: SimParams, n_jobs=1):
    """Run the full risk sweep; one SweepPoint per requested risk level.

    Trial seeds are (base_seed, p_index, trial_index), so any slice of the
    sweep reproduces the full run's numbers exactly.
    """
    points = []
    for p_index, P in enumerate(p_values):
        if not 0.0 < P < 1.0:
            raise ValueError("sweep risk levels must lie in (0, 1)")
        scenarios = [make_scenario(params, P, p_index, t)
                     for t in range(params.trials)]
        summaries = _run_many(scenarios, n_jobs)
        distances = np.array([s.distance for s in summaries])
        stderr = float(distances.std(ddof=1) / math.sqrt(len(distances))) \
            if len(distances) > 1 else 0.0
        points.append(SweepPoint(
            P=P, p_failure=p_failure(summaries),
            mean_distance=float(distances.mean()),
            stderr_distance=stderr,
            distances=tuple(float(d) for d in distances),
            violations=tuple(int(s.violations) for s in summaries),
            ledger_totals=tuple(float(s.ledger_total) for s in summaries)))
    return points


# ---------------------------------------------------------------------------
# CSV output.  All writers are atomic (temp file + rename) and use shortest
# round-trip float formatting so identical runs produce identical bytes.

def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def atomic_write_text(path, text):
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


TRAJECTORY_COLUMNS = ("step,x,y,theta,u_cmd_vx,u_cmd_vy,u_cmd_omega,"
                      "u_safe_vx,u_safe_vy,u_safe_omega,h,alpha,margin,violated")


def trajectory_csv(result: TrialResult, header_comments=()) -> str:
    lines = ["# " + c for c in header_comments]
    lines.append(TRAJECTORY_COLUMNS)
    for k in range(result.steps):
        row = [str(k)]
        row += [_fmt(v) for v in result.states[k]]
        row += [_fmt(v) for v in result.u_cmd[k]]
        row += [_fmt(v) for v in result.u_safe[k]]
        row += [_fmt(result.h[k]), _fmt(result.alpha[k]), _fmt(result.margin[k]),
                _fmt(bool(result.violated[k]))]
        lines.append(",".join(row))
    return "\n".join(lines) + "\n"


SUMMARY_COLUMNS = "P,p_failure,mean_distance,stderr_distance"


def summary_csv(points, header_comments=()) -> str:
    lines = ["# " + c for c in header_comments]
    lines.append(SUMMARY_COLUMNS)
    for pt in points:
        lines.append(",".join([_fmt(pt.P), _fmt(pt.p_failure),
                               _fmt(pt.mean_distance), _fmt(pt.stderr_distance)]))
    return "\n".join(lines) + "\n"


TRIALS_COLUMNS = "P,trial,distance,violations,ledger_total"


def trials_csv(points, header_comments=()) -> str:
    lines = ["# " + c for c in header_comments]
    lines.append(TRIALS_COLUMNS)
    for pt in points:
        for t, (dist, nv, lt) in enumerate(zip(pt.distances, pt.violations,
                                               pt.ledger_totals)):
            lines.append(",".join([_fmt(pt.P), str(t), _fmt(dist), str(nv),
                                   _fmt(lt)]))
    return "\n".join(lines) + "\n"
