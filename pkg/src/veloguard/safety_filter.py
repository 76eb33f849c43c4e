"""Probabilistic safety filter for velocity commands.

Each step: pick the active obstacle, refresh the disturbance moments and the
contraction rate alpha on interval boundaries, cancel the expected residual
from the raw command, reduce the variance-tightened barrier condition to a
half-space in command space, and project the command onto it under the input
box.  The per-interval exit bounds are accumulated into a union-bound ledger.

The tightened condition on the expected next state is

    h_tilde(p + dt * (u + E[d]_xy)) - (lambda_max / 2) * dt^2 * e^T cov(d) e
        >= alpha * h_tilde(p),

where cov(d) is the velocity-level residual covariance, so dt^2 * e^T cov e is
the directional variance of the next position.  Because h_tilde is strictly
increasing along e and analytically invertible, the condition is exactly the
half-space e^T u_xy >= bnd computed by constraint_halfspace.
"""

import math
from dataclasses import dataclass, field

import numpy as np

from . import tracking
from .barrier import (BarrierConfig, DegenerateDirectionError, DirectionalBarrier,
                      InfeasibleLevelError, ObstacleSet, closest_obstacle,
                      h_tilde, h_tilde_inverse, h_tilde_q, lambda_max)
from .disturbance import ZERO_MOMENTS, DisturbanceMoments
from .risk import (ALPHA_EPS, InfeasibleRiskError, RiskBudget, SafetyLedger,
                   freedman_bound, ledger_accumulate, solve_alpha)
from .rom import (Command, Disturbance, HistoryWindow, RomState, make_window,
                  push_history)

DEFAULT_INPUT_BOX = ((-1.0, 1.0), (-1.0, 1.0), (-1.0, 1.0))
_PROJ_TOL = 1e-12


class InfeasibleMarginError(ValueError):
    """The tightened barrier level is above the barrier's range."""


class InfeasibleProjectionError(ValueError):
    """The half-space excludes the entire input box."""


@dataclass(frozen=True)
class FilterConfig:
    dt: float
    barrier: BarrierConfig
    risk: RiskBudget
    input_box: tuple = DEFAULT_INPUT_BOX
    moment_refresh_period: int = 0  # 0 means risk.K
    history_len: int = 4

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if len(self.input_box) != 3:
            raise ValueError("input_box must bound all three command components")
        for lo, hi in self.input_box:
            if not lo < hi:
                raise ValueError("each input bound must satisfy lo < hi")
        if self.history_len < 1:
            raise ValueError("history_len must be >= 1")
        if self.moment_refresh_period < 0:
            raise ValueError("moment_refresh_period must be >= 0")

    @property
    def refresh_period(self) -> int:
        return self.moment_refresh_period or self.risk.K


@dataclass
class FilterState:
    """Mutable per-agent filter memory; single-owner."""

    history: HistoryWindow
    moments: DisturbanceMoments = ZERO_MOMENTS
    alpha: float = 1.0 - ALPHA_EPS
    e: tuple = (1.0, 0.0)
    k: int = 0
    ledger: SafetyLedger = field(default_factory=SafetyLedger)
    sigma_used: float = 0.0


def init_filter_state(cfg: FilterConfig) -> FilterState:
    return FilterState(history=make_window(cfg.history_len),
                       alpha=cfg.risk.alpha)


@dataclass(frozen=True)
class FilterDiagnostics:
    h: float
    alpha: float
    margin: float
    active: bool
    infeasible: bool
    obstacle_index: int
    refreshed: bool


def tightened_constraint(x: RomState, u: Command, moments: DisturbanceMoments,
                         b: DirectionalBarrier, alpha: float, dt: float) -> float:
    """Signed margin of the variance-tightened barrier condition.

    Nonnegative iff commanding u keeps the expected next state above the
    contracted level alpha * h_tilde(x) after the Jensen variance correction.
    """
    rho = b.obstacle.center
    R = b.obstacle.combined_radius
    ex, ey = b.e
    mean = moments.mean
    qn = ((x.p_x + dt * (u.v_x + mean[0])) - rho[0]) * ex \
        + ((x.p_y + dt * (u.v_y + mean[1])) - rho[1]) * ey
    tighten = 0.5 * lambda_max(b) * dt * dt * moments.directional_variance(b.e)
    return h_tilde_q(qn, R, b.config) - tighten - alpha * h_tilde(x, b)


def constraint_halfspace(x: RomState, moments: DisturbanceMoments,
                         b: DirectionalBarrier, alpha: float, dt: float):
    """Exact half-space form of the tightened condition: a^T u >= bnd.

    a = (e_x, e_y, 0); yaw never enters because the barrier is position-only.
    """
    ex, ey = b.e
    rho = b.obstacle.center
    level = alpha * h_tilde(x, b) \
        + 0.5 * lambda_max(b) * dt * dt * moments.directional_variance(b.e)
    try:
        q_req = h_tilde_inverse(level, b)
    except InfeasibleLevelError:
        raise InfeasibleMarginError(
            "tightened level %.6g is above the barrier range" % level) from None
    q_now = (x.p_x - rho[0]) * ex + (x.p_y - rho[1]) * ey
    mean = moments.mean
    bnd = (q_req - q_now) / dt - (ex * mean[0] + ey * mean[1])
    return (ex, ey, 0.0), bnd


def _clamp3(u, box):
    return (min(max(u[0], box[0][0]), box[0][1]),
            min(max(u[1], box[1][0]), box[1][1]),
            min(max(u[2], box[2][0]), box[2][1]))


def project(u_adj: Command, a, bnd: float, box) -> Command:
    """Minimal-deviation projection of u_adj onto box intersect {a^T u >= bnd}.

    Clamping to the box solves the problem whenever the half-space is then
    satisfied.  Otherwise the KKT solution is u(mu) = clamp(u_adj + mu * a)
    with the multiplier mu >= 0 chosen so the constraint is active; a^T u(mu)
    is continuous and nondecreasing in mu, so mu is found by bisection.
    """
    u0 = (u_adj.v_x, u_adj.v_y, u_adj.omega)
    uc = _clamp3(u0, box)
    phi = a[0] * uc[0] + a[1] * uc[1] + a[2] * uc[2]
    if phi >= bnd:
        return Command(uc[0], uc[1], uc[2])

    phi_max = sum(max(ai * lo, ai * hi) for ai, (lo, hi) in zip(a, box))
    if bnd > phi_max:
        raise InfeasibleProjectionError(
            "half-space excludes the input box (needs %.6g, box max %.6g)"
            % (bnd, phi_max))

    def u_of(mu):
        return _clamp3((u0[0] + mu * a[0], u0[1] + mu * a[1], u0[2] + mu * a[2]), box)

    def phi_of(mu):
        u = u_of(mu)
        return a[0] * u[0] + a[1] * u[1] + a[2] * u[2]

    hi = 1.0
    for _ in range(200):
        if phi_of(hi) >= bnd:
            break
        hi *= 2.0
    lo = 0.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if phi_of(mid) >= bnd:
            hi = mid
        else:
            lo = mid
        if hi - lo <= _PROJ_TOL * max(1.0, hi):
            break
    u = u_of(hi)
    return Command(u[0], u[1], u[2])


def _retreat_command(u_adj: Command, a, box) -> Command:
    """Best-effort fallback: the box point maximizing a^T u; components the
    constraint ignores keep the clamped nominal value."""
    uc = _clamp3((u_adj.v_x, u_adj.v_y, u_adj.omega), box)
    out = []
    for ai, (lo, hi), nominal in zip(a, box, uc):
        if ai > 0.0:
            out.append(hi)
        elif ai < 0.0:
            out.append(lo)
        else:
            out.append(nominal)
    return Command(out[0], out[1], out[2])


def _fallback_active_obstacle(p, obstacles: ObstacleSet, cfg: BarrierConfig):
    # degenerate direction: robot exactly on a center; barrier value still defined
    dx = p[0] - obstacles.centers[:, 0]
    dy = p[1] - obstacles.centers[:, 1]
    margins = np.hypot(dx, dy) - obstacles.radii
    idx = int(np.argmin(margins))
    h = cfg.lam * (1.0 - math.exp(-cfg.gamma * float(margins[idx])))
    return idx, h


def filter_step(state: FilterState, x: RomState, u_cmd: Command,
                obstacles: ObstacleSet, cfg: FilterConfig, model):
    """One pass of the deployment loop; returns (safe command, diagnostics).

    The raw command is recorded in the history before the moments query, so
    the conditioning window at step k includes the pair (x_k, u_cmd_k); the
    window never sees filtered commands, which avoids an algebraic loop.
    Infeasibility is reported in the diagnostics and through a vacuous ledger
    entry rather than raised.
    """
    state.history = push_history(state.history, x, u_cmd)
    p = (x.p_x, x.p_y)
    try:
        idx, h_k, e = closest_obstacle(p, obstacles, cfg.barrier)
        state.e = e
    except DegenerateDirectionError:
        idx, h_k = _fallback_active_obstacle(p, obstacles, cfg.barrier)
        e = state.e

    refreshed = False
    if state.k % cfg.refresh_period == 0:
        refreshed = True
        state.moments = model.moments(state.history)
        sigma_dir = cfg.dt * math.sqrt(max(state.moments.directional_variance(e), 0.0))
        state.sigma_used = max(cfg.risk.sigma, sigma_dir)
        if h_k >= 0.0:
            try:
                state.alpha = solve_alpha(cfg.risk.P, cfg.risk.K, h_k,
                                          cfg.risk.delta, state.sigma_used)
            except InfeasibleRiskError:
                state.alpha = 1.0 - ALPHA_EPS
            ledger_accumulate(state.ledger,
                              freedman_bound(state.alpha, cfg.risk.K, h_k,
                                             cfg.risk.delta, state.sigma_used))
        else:
            # interval starts outside the safe set: no valid bound, keep the
            # previous alpha and charge the interval in full
            ledger_accumulate(state.ledger, 1.0)

    mean = state.moments.mean
    u_adj = tracking.adjust_command(
        u_cmd, Disturbance(float(mean[0]), float(mean[1]), float(mean[2])))
    b = DirectionalBarrier(obstacle=obstacles[idx], e=e, config=cfg.barrier)
    a = (e[0], e[1], 0.0)
    infeasible = False
    try:
        a, bnd = constraint_halfspace(x, state.moments, b, state.alpha, cfg.dt)
        u_safe = project(u_adj, a, bnd, cfg.input_box)
        uc = _clamp3((u_adj.v_x, u_adj.v_y, u_adj.omega), cfg.input_box)
        active = a[0] * uc[0] + a[1] * uc[1] + a[2] * uc[2] < bnd
    except (InfeasibleMarginError, InfeasibleProjectionError):
        u_safe = _retreat_command(u_adj, a, cfg.input_box)
        active = True
        infeasible = True
        if state.ledger.interval_bounds:
            state.ledger.interval_bounds[-1] = 1.0

    margin = tightened_constraint(x, u_safe, state.moments, b, state.alpha, cfg.dt)
    state.k += 1
    return u_safe, FilterDiagnostics(h=h_k, alpha=state.alpha, margin=margin,
                                     active=active, infeasible=infeasible,
                                     obstacle_index=idx, refreshed=refreshed)
