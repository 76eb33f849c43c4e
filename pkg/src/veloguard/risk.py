"""K-step exit-probability machinery.

The martingale concentration bound used throughout is

    P_exit <= exp(alpha^K * h0 / delta) * (sigma^2 K / lam) ** (lam / delta^2),
    lam = alpha^K * h0 * delta + sigma^2 * K,

where h0 is the barrier value at the interval start, delta a one-sided bound
on single-step barrier decrease beyond the contraction, and sigma^2 a bound on
the conditional variance of the barrier increments.  The bound is evaluated in
log space (raw exponent magnitudes reach the hundreds) and clamped to 1.

solve_alpha numerically inverts the bound in the contraction rate alpha, which
is how a requested risk level is turned into a runtime constraint.
"""

import math
from dataclasses import dataclass, field

ALPHA_EPS = 1e-6
_REL_TOL = 1e-6
_COARSE_GRID = 64
_FALLBACK_GRID = 10_000


class AlreadyUnsafeError(ValueError):
    """Bound requested from a state already outside the safe set."""


class InfeasibleRiskError(ValueError):
    """No contraction rate achieves the requested exit probability."""


@dataclass(frozen=True)
class RiskBudget:
    """Risk parameters tying the probabilistic bound to the runtime filter.

    Args:
        P: target K-step exit probability, in (0, 1).
        K: interval length in steps, >= 1.
        delta: one-sided jump bound on barrier decrease, > 0.
        sigma: floor on the directional standard deviation of the barrier
            increments; the filter raises it to the model's measured value.
        alpha: initial contraction rate in (0, 1); refreshed at runtime.
    """

    P: float
    K: int
    delta: float
    sigma: float
    alpha: float = 0.95

    def __post_init__(self):
        if not 0.0 < self.P < 1.0:
            raise ValueError("P must lie in (0, 1)")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        if not self.delta > 0.0:
            raise ValueError("delta must be positive")
        if not self.sigma > 0.0:
            raise ValueError("sigma must be positive")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")


@dataclass
class SafetyLedger:
    """Per-interval exit bounds; the union bound over a run is their sum."""

    interval_bounds: list = field(default_factory=list)

    @property
    def F(self):
        return len(self.interval_bounds)

    def total(self):
        return math.fsum(self.interval_bounds)


def _check_bound_args(alpha, K, h0, delta, sigma):
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if K < 1:
        raise ValueError("K must be >= 1")
    if h0 < 0.0:
        raise AlreadyUnsafeError("h0 < 0: state already unsafe, bound undefined")
    if not delta > 0.0:
        raise ValueError("delta must be positive")
    if not sigma > 0.0:
        raise ValueError("sigma must be positive")


def freedman_log_bound(alpha, K, h0, delta, sigma):
    """Natural log of the (unclamped) K-step exit-probability bound.

    Args:
        alpha: contraction rate in (0, 1).
        K: number of steps in the interval.
        h0: barrier value at the interval start, >= 0.
        delta: one-sided jump bound, > 0.
        sigma: per-step standard-deviation bound, > 0.

    Returns:
        log of the bound; nonpositive in exact arithmetic (zero when h0 = 0),
        though rounding can leave a tiny positive residue that callers clamp.
    """
    _check_bound_args(alpha, K, h0, delta, sigma)
    aK = alpha ** K
    lam = aK * h0 * delta + sigma * sigma * K
    # sigma^2 K / lam <= 1 always, so the second term is nonpositive
    return aK * h0 / delta + (lam / (delta * delta)) * math.log(sigma * sigma * K / lam)


def freedman_bound(alpha, K, h0, delta, sigma):
    """K-step exit-probability bound, clamped into (0, 1]."""
    return min(1.0, math.exp(min(freedman_log_bound(alpha, K, h0, delta, sigma), 0.0)))


def _is_nonincreasing(values, slack=1e-12):
    return all(b <= a + slack for a, b in zip(values, values[1:]))


def solve_alpha(P, K, h0, delta, sigma):
    """Invert the exit bound in alpha for a requested risk level.

    Bisects on alpha in (ALPHA_EPS, 1 - ALPHA_EPS) after confirming on a
    coarse grid that the bound is nonincreasing in alpha; if that check fails,
    falls back to the smallest alpha on a dense grid whose bound is <= P.

    Args:
        P: target exit probability in (0, 1).
        K, h0, delta, sigma: as in freedman_bound.

    Returns:
        alpha achieving |bound(alpha) - P| <= 1e-6 * P when the level is
        interior to the bound's range; ALPHA_EPS if even the least
        conservative alpha is already below P.

    Raises:
        InfeasibleRiskError: no alpha reaches a bound <= P.
    """
    if not 0.0 < P < 1.0:
        raise ValueError("P must lie in (0, 1)")
    lo, hi = ALPHA_EPS, 1.0 - ALPHA_EPS
    target = math.log(P)

    grid = [lo + (hi - lo) * i / (_COARSE_GRID - 1) for i in range(_COARSE_GRID)]
    logs = [freedman_log_bound(a, K, h0, delta, sigma) for a in grid]
    if not _is_nonincreasing(logs):
        feasible = [a for a in _grid_points(lo, hi, _FALLBACK_GRID)
                    if freedman_log_bound(a, K, h0, delta, sigma) <= target]
        if not feasible:
            raise InfeasibleRiskError("no alpha achieves the requested bound")
        return feasible[0]

    g_lo = logs[0] - target
    g_hi = logs[-1] - target
    if g_hi > 0.0:
        raise InfeasibleRiskError("no alpha achieves the requested bound")
    if g_lo <= 0.0:
        # even the loosest alpha already beats P
        return lo
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        g = freedman_log_bound(mid, K, h0, delta, sigma) - target
        if abs(g) <= 0.5 * _REL_TOL:
            return mid
        if g > 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return hi


def _grid_points(lo, hi, n):
    return (lo + (hi - lo) * i / (n - 1) for i in range(n))


def estimate_delta(max_step, config):
    """Jump bound from a worst-case per-step displacement.

    Twice the barrier's slope on the safety boundary, gamma * lam, times the
    displacement; a practical upper bound on the one-step barrier decrease
    for trajectories that stay near the boundary.

    Args:
        max_step: largest position change per step, in meters, >= 0.
        config: BarrierConfig supplying gamma and lam.
    """
    if max_step < 0.0:
        raise ValueError("max_step must be nonnegative")
    return 2.0 * config.gamma * config.lam * max_step


def ledger_accumulate(ledger: SafetyLedger, interval_bound: float) -> SafetyLedger:
    """Append one interval's exit bound; the running union bound is total()."""
    if not 0.0 < interval_bound <= 1.0:
        raise ValueError("interval bound must lie in (0, 1]")
    ledger.interval_bounds.append(interval_bound)
    return ledger
