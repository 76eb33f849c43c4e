"""Stochastic barrier safety filtering for velocity-commanded planar robots.

The library wraps an opaque low-level controller abstraction: it models the
tracking residual of a planar single-integrator, corrects commands for the
expected residual, and minimally modifies them so a smoothed obstacle barrier
contracts no faster than a rate certified against a requested K-step exit
probability.  A seeded Monte Carlo harness and a CLI sit on top.
"""

from .barrier import (BarrierConfig, DegenerateDirectionError, DirectionalBarrier,
                      InfeasibleLevelError, Obstacle, ObstacleSet,
                      closest_obstacle, h_smooth, h_tilde, h_tilde_inverse,
                      h_tilde_q, lambda_max, sdf)
from .disturbance import (DecoderModel, DecoderWeights, DisturbanceMoments,
                          GaussianModel, ModelInterface, ReplayModel,
                          StudentTModel, WeightFormatError, WeightShapeError,
                          WeightVersionError, build_model, decoder_infer,
                          load_weights, moments_by_sampling, save_weights,
                          serialize_weights, student_t_sample, zero_model)
from .planner import (GridMap, UnreachableError, astar, grid_from_obstacles,
                      nominal_velocity, path_to_points)
from .risk import (AlreadyUnsafeError, InfeasibleRiskError, RiskBudget,
                   SafetyLedger, estimate_delta, freedman_bound,
                   freedman_log_bound, ledger_accumulate, solve_alpha)
from .rom import (Command, Disturbance, HistoryWindow, RomState, make_window,
                  push_history, step, wrap_angle)
from .safety_filter import (FilterConfig, FilterDiagnostics, FilterState,
                            InfeasibleMarginError, InfeasibleProjectionError,
                            constraint_halfspace, filter_step, init_filter_state,
                            project, tightened_constraint)
from .sim import (ObstacleRandomization, Scenario, SimParams, SweepPoint,
                  TrialResult, make_scenario, p_failure, run_trial, sweep)
from .tracking import adjust_command, optimal_command

__version__ = "0.1.0"
