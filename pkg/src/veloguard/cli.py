"""Command-line entry point.

Subcommands: simulate, sweep, alpha-table, filter-trace, validate-weights.
Exit codes: 0 success, 2 configuration error, 3 I/O or data-file error.
"""

import argparse
import json
import math
import os
import sys

import numpy as np

from . import rom, sim
from .config import ConfigError, load_config
from .disturbance import (WeightFormatError, build_model, context_vector,
                          decoder_infer, load_weights)
from .risk import (AlreadyUnsafeError, InfeasibleRiskError, freedman_log_bound,
                   solve_alpha)
from .rom import Command, RomState, make_window, push_history
from .safety_filter import FilterConfig, filter_step, init_filter_state

PROBE_TOLERANCE = 1e-5


def _common_flags(p):
    p.add_argument("--config", help="path to a JSON run configuration")
    p.add_argument("--seed", type=int, help="override the base seed")
    p.add_argument("--out-dir", default=".", help="directory for output files")
    p.add_argument("--trials", type=int, help="override the trial count")
    p.add_argument("--steps", type=int, help="override steps per trial")
    p.add_argument("--risk-p", type=float, help="override the risk level P")
    p.add_argument("--parallel", type=int, default=1,
                   help="worker processes for trial execution")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="veloguard",
        description="Stochastic barrier safety filtering and its simulation harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run seeded trials at one risk level")
    _common_flags(p)
    p.add_argument("--save-trajectories", type=int, default=0, metavar="N",
                   help="also write per-trial trajectory CSVs for the first N trials")

    p = sub.add_parser("sweep", help="run the risk-level sweep")
    _common_flags(p)

    p = sub.add_parser("alpha-table", help="tabulate the contraction rate "
                                           "against risk level and noise scale")
    p.add_argument("--risk-p", type=float, action="append", required=True,
                   help="risk level; repeat for multiple rows")
    p.add_argument("--sigma", type=float, action="append", required=True,
                   help="noise scale; repeat for multiple columns")
    p.add_argument("--k-steps", type=int, default=10)
    p.add_argument("--h0", type=float, default=10.0)
    p.add_argument("--delta", type=float, default=0.01)
    p.add_argument("--out-dir", default=".")

    p = sub.add_parser("filter-trace", help="replay a scripted command sequence "
                                            "through the filter")
    _common_flags(p)
    p.add_argument("--script", required=True,
                   help="CSV of commands with columns t,vx,vy,omega")

    p = sub.add_parser("validate-weights", help="check a decoder weight file "
                                                "and optionally a probe set")
    p.add_argument("--weights", required=True)
    p.add_argument("--probe", help="probe JSON produced alongside the weights")
    return parser


def _load(args):
    overrides = {"seed": args.seed, "trials": args.trials, "steps": args.steps,
                 "risk_p": args.risk_p}
    return load_config(args.config, overrides)


def _headers(cfg):
    return ("config_sha256=%s" % cfg.hash(), "seed=%d" % cfg.seed)


def cmd_simulate(args) -> int:
    cfg = _load(args)
    params = cfg.sim_params()
    scenarios = [sim.make_scenario(params, cfg.risk_p, 0, t)
                 for t in range(params.trials)]
    n_save = min(args.save_trajectories, len(scenarios))
    results = [sim.run_trial(s) for s in scenarios[:n_save]]
    summaries = [sim.TrialSummary(distance=r.distance, violations=r.violations,
                                  steps=r.steps, ledger_total=r.ledger_total,
                                  ledger_intervals=r.ledger_intervals)
                 for r in results]
    summaries += sim._run_many(scenarios[n_save:], args.parallel)

    distances = np.array([s.distance for s in summaries])
    stderr = float(distances.std(ddof=1) / math.sqrt(len(distances))) \
        if len(distances) > 1 else 0.0
    point = sim.SweepPoint(
        P=cfg.risk_p, p_failure=sim.p_failure(summaries),
        mean_distance=float(distances.mean()), stderr_distance=stderr,
        distances=tuple(s.distance for s in summaries),
        violations=tuple(s.violations for s in summaries),
        ledger_totals=tuple(s.ledger_total for s in summaries))

    os.makedirs(args.out_dir, exist_ok=True)
    sim.atomic_write_text(os.path.join(args.out_dir, "simulate_summary.csv"),
                          sim.summary_csv([point], _headers(cfg)))
    sim.atomic_write_text(os.path.join(args.out_dir, "simulate_trials.csv"),
                          sim.trials_csv([point], _headers(cfg)))
    for t, r in enumerate(results):
        sim.atomic_write_text(
            os.path.join(args.out_dir, "trajectory_%03d.csv" % t),
            sim.trajectory_csv(r, _headers(cfg)))
    print("simulate: %d trials, p_failure=%g, mean_distance=%.4f"
          % (len(summaries), point.p_failure, point.mean_distance))
    return 0


def cmd_sweep(args) -> int:
    cfg = _load(args)
    params = cfg.sim_params()
    points = sim.sweep(cfg.sweep_p, params, n_jobs=args.parallel)
    os.makedirs(args.out_dir, exist_ok=True)
    sim.atomic_write_text(os.path.join(args.out_dir, "sweep_summary.csv"),
                          sim.summary_csv(points, _headers(cfg)))
    sim.atomic_write_text(os.path.join(args.out_dir, "sweep_trials.csv"),
                          sim.trials_csv(points, _headers(cfg)))
    for pt in points:
        print("P=%g p_failure=%g mean_distance=%.4f"
              % (pt.P, pt.p_failure, pt.mean_distance))
    return 0


def cmd_alpha_table(args) -> int:
    lines = ["P,sigma,alpha,log10_bound"]
    for P in args.risk_p:
        if not 0.0 < P < 1.0:
            print("alpha-table: risk level %g outside (0, 1)" % P, file=sys.stderr)
            return 2
        for sigma in args.sigma:
            try:
                alpha = solve_alpha(P, args.k_steps, args.h0, args.delta, sigma)
                log10 = freedman_log_bound(alpha, args.k_steps, args.h0,
                                           args.delta, sigma) / math.log(10.0)
                lines.append("%r,%r,%r,%r" % (float(P), float(sigma),
                                              float(alpha), float(log10)))
            except InfeasibleRiskError:
                print("alpha-table: infeasible at P=%g sigma=%g" % (P, sigma),
                      file=sys.stderr)
                lines.append("%r,%r,," % (float(P), float(sigma)))
            except (AlreadyUnsafeError, ValueError) as err:
                print("alpha-table: %s" % err, file=sys.stderr)
                return 2
    os.makedirs(args.out_dir, exist_ok=True)
    sim.atomic_write_text(os.path.join(args.out_dir, "alpha_table.csv"),
                          "\n".join(lines) + "\n")
    return 0


def _read_script(path):
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = [ln.strip() for ln in fh if ln.strip()]
    except OSError as err:
        raise ConfigError("cannot read script: %s" % err) from None
    if not lines or lines[0] != "t,vx,vy,omega":
        raise ConfigError("script must start with header t,vx,vy,omega")
    rows = []
    for ln in lines[1:]:
        parts = ln.split(",")
        if len(parts) != 4:
            raise ConfigError("malformed script row: %r" % ln)
        try:
            rows.append(tuple(float(v) for v in parts))
        except ValueError:
            raise ConfigError("non-numeric script row: %r" % ln) from None
    return rows


def cmd_filter_trace(args) -> int:
    cfg = _load(args)
    rows = _read_script(args.script)
    params = cfg.sim_params()
    scenario = sim.make_scenario(params, cfg.risk_p, 0, 0)
    model = build_model(scenario.model_spec)
    fcfg = FilterConfig(dt=scenario.dt, barrier=scenario.barrier,
                        risk=scenario.risk, input_box=scenario.input_box,
                        history_len=scenario.history_len)
    state = init_filter_state(fcfg)
    rng = np.random.default_rng(np.random.SeedSequence(scenario.seed).spawn(2)[1])

    x = scenario.start
    n = len(rows)
    out = sim.TrialResult(
        states=np.empty((n, 3)), u_cmd=np.empty((n, 3)), u_safe=np.empty((n, 3)),
        h=np.empty(n), alpha=np.empty(n), margin=np.empty(n),
        violated=np.zeros(n, dtype=bool), violations=0, distance=0.0,
        ledger_total=0.0, ledger_intervals=0)
    for k, (_t, vx, vy, omega) in enumerate(rows):
        u_cmd = Command(vx, vy, omega)
        u_safe, diag = filter_step(state, x, u_cmd, scenario.obstacles, fcfg, model)
        out.states[k] = (x.p_x, x.p_y, x.theta)
        out.u_cmd[k] = (vx, vy, omega)
        out.u_safe[k] = (u_safe.v_x, u_safe.v_y, u_safe.omega)
        out.h[k] = diag.h
        out.alpha[k] = diag.alpha
        out.margin[k] = diag.margin
        out.violated[k] = diag.h < 0.0
        d = model.sample(state.history, rng)
        x = rom.step(x, u_safe, d, scenario.dt)
    out.violations = int(out.violated.sum())

    os.makedirs(args.out_dir, exist_ok=True)
    sim.atomic_write_text(os.path.join(args.out_dir, "filter_trace.csv"),
                          sim.trajectory_csv(out, _headers(cfg)))
    print("filter-trace: %d steps, %d violations" % (n, out.violations))
    return 0


def _window_from_probe(node, capacity):
    w = make_window(max(1, capacity))
    for st, cm in zip(node["states"], node["commands"]):
        w = push_history(w, RomState(*map(float, st)), Command(*map(float, cm)))
    return w


def cmd_validate_weights(args) -> int:
    weights = load_weights(args.weights)
    shape = " -> ".join(str(l.weight.shape[1]) for l in weights.layers)
    shape += " -> %d" % weights.layers[-1].weight.shape[0]
    print("weights ok: context_len=%d latent_dim=%d layers %s"
          % (weights.context_len, weights.latent_dim, shape))
    if not args.probe:
        return 0
    with open(args.probe, "r", encoding="utf-8") as fh:
        probe = json.load(fh)
    worst = 0.0
    for case in probe["cases"]:
        window = _window_from_probe(case, weights.context_len)
        d = decoder_infer(weights, window, np.asarray(case["z"], dtype=float))
        got = (d.d_x, d.d_y, d.d_theta)
        for g, e in zip(got, case["expected"]):
            worst = max(worst, abs(g - float(e)))
    print("probe: %d cases, max abs deviation %.3g" % (len(probe["cases"]), worst))
    if worst > PROBE_TOLERANCE:
        print("validate-weights: probe deviation %.3g exceeds %.0e"
              % (worst, PROBE_TOLERANCE), file=sys.stderr)
        return 3
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "simulate":
            return cmd_simulate(args)
        if args.command == "sweep":
            return cmd_sweep(args)
        if args.command == "alpha-table":
            return cmd_alpha_table(args)
        if args.command == "filter-trace":
            return cmd_filter_trace(args)
        if args.command == "validate-weights":
            return cmd_validate_weights(args)
        return 2
    except ConfigError as err:
        print("veloguard: %s" % err, file=sys.stderr)
        return 2
    except (WeightFormatError, OSError, json.JSONDecodeError, KeyError) as err:
        print("veloguard: %s" % err, file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
