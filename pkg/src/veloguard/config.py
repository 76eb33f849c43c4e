"""Run configuration: strict JSON schema, flag overrides, canonical hashing."""

import hashlib
import json
import math
import os
from dataclasses import dataclass

from .barrier import BarrierConfig, Obstacle
from .disturbance import build_model
from .rom import RomState
from .sim import ObstacleRandomization, SimParams

ENV_CONFIG_PATH = "VELOGUARD_CONFIG"
SCHEMA_VERSION = 1

DEFAULT_SWEEP_P = (1e-6, 1e-4, 1e-2, 0.1, 0.3)


class ConfigError(ValueError):
    """Configuration file or override is invalid; maps to exit code 2."""


def default_config() -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "seed": 0,
        "dt": 0.01,
        "steps": 2000,
        "trials": 100,
        "speed": 0.5,
        "direction": [1.0, 0.0],
        "start": [0.0, 0.0, 0.0],
        "barrier": {"lambda": 10.0, "gamma": 0.5},
        "risk": {"p": 0.01, "k": 10, "delta": 1.0, "sigma": 0.001},
        "input_box": [[-1.0, 1.0], [-1.0, 1.0], [-1.0, 1.0]],
        "history_len": 4,
        "obstacles": {"mode": "random", "count": [2, 4], "x": [1.5, 8.5],
                      "y": [-0.9, 0.9], "radius": [0.3, 0.6],
                      "start_clearance": 0.5, "min_gap": 0.7},
        "model": {"kind": "student_t", "dof": 3.0, "scale": 0.1,
                  "clip_radius": 2.0},
        "sweep_p": list(DEFAULT_SWEEP_P),
    }


def _need(cond, msg):
    if not cond:
        raise ConfigError(msg)


def _num(v, what, positive=False):
    _need(isinstance(v, (int, float)) and not isinstance(v, bool)
          and math.isfinite(v), "%s must be a finite number" % what)
    if positive:
        _need(v > 0, "%s must be positive" % what)
    return float(v)


def _int(v, what, minimum=None):
    _need(isinstance(v, int) and not isinstance(v, bool), "%s must be an integer" % what)
    if minimum is not None:
        _need(v >= minimum, "%s must be >= %d" % (what, minimum))
    return v


def _pair(v, what):
    _need(isinstance(v, list) and len(v) == 2, "%s must be a 2-element list" % what)
    return [_num(v[0], what), _num(v[1], what)]


def _check_keys(node, allowed, where):
    _need(isinstance(node, dict), "%s must be an object" % where)
    unknown = set(node) - set(allowed)
    _need(not unknown, "unknown keys in %s: %s" % (where, sorted(unknown)))


def validate_config(doc: dict) -> dict:
    """Merge onto defaults and validate strictly; returns the effective dict."""
    _check_keys(doc, default_config(), "config")
    eff = default_config()
    for key, value in doc.items():
        # obstacles and model carry mode/kind-dependent key sets; replace whole
        if isinstance(eff[key], dict) and key not in ("model", "obstacles"):
            _check_keys(value, eff[key], key)
            eff[key].update(value)
        else:
            eff[key] = value

    _need(eff["schema_version"] == SCHEMA_VERSION,
          "unsupported schema_version %r" % eff["schema_version"])
    _int(eff["seed"], "seed", 0)
    _num(eff["dt"], "dt", positive=True)
    _int(eff["steps"], "steps", 1)
    _int(eff["trials"], "trials", 1)
    _num(eff["speed"], "speed", positive=True)

    d = _pair(eff["direction"], "direction")
    norm = math.hypot(d[0], d[1])
    _need(norm > 0, "direction must be nonzero")
    eff["direction"] = [d[0] / norm, d[1] / norm]

    s = eff["start"]
    _need(isinstance(s, list) and len(s) == 3, "start must be [x, y, theta]")
    eff["start"] = [_num(v, "start") for v in s]

    _num(eff["barrier"]["lambda"], "barrier.lambda", positive=True)
    _num(eff["barrier"]["gamma"], "barrier.gamma", positive=True)

    r = eff["risk"]
    _num(r["p"], "risk.p", positive=True)
    _need(r["p"] < 1.0, "risk.p must be below 1")
    _int(r["k"], "risk.k", 1)
    _num(r["delta"], "risk.delta", positive=True)
    _num(r["sigma"], "risk.sigma", positive=True)

    box = eff["input_box"]
    _need(isinstance(box, list) and len(box) == 3, "input_box must list 3 bounds")
    for i, lohi in enumerate(box):
        lo, hi = _pair(lohi, "input_box[%d]" % i)
        _need(lo < hi, "input_box[%d] must satisfy lo < hi" % i)
    _int(eff["history_len"], "history_len", 1)

    obs = eff["obstacles"]
    _need(isinstance(obs, dict) and "mode" in obs, "obstacles must carry a mode")
    if obs["mode"] == "random":
        _check_keys(obs, ("mode", "count", "x", "y", "radius",
                          "start_clearance", "min_gap"), "obstacles")
        base = default_config()["obstacles"]
        merged = dict(base)
        merged.update(obs)
        cmin, cmax = merged["count"]
        _int(cmin, "obstacles.count[0]", 1)
        _int(cmax, "obstacles.count[1]", cmin)
        _pair(merged["x"], "obstacles.x")
        _pair(merged["y"], "obstacles.y")
        rmin, rmax = _pair(merged["radius"], "obstacles.radius")
        _need(rmin > 0, "obstacles.radius must be positive")
        _num(merged["start_clearance"], "obstacles.start_clearance")
        _num(merged["min_gap"], "obstacles.min_gap")
        _need(merged["min_gap"] >= 0, "obstacles.min_gap must be nonnegative")
        eff["obstacles"] = merged
    elif obs["mode"] == "fixed":
        _check_keys(obs, ("mode", "items"), "obstacles")
        _need(isinstance(obs.get("items"), list) and obs["items"],
              "fixed obstacles need a nonempty items list")
        for i, item in enumerate(obs["items"]):
            _check_keys(item, ("center", "radius"), "obstacles.items[%d]" % i)
            _pair(item["center"], "obstacles.items[%d].center" % i)
            _num(item["radius"], "obstacles.items[%d].radius" % i, positive=True)
    else:
        raise ConfigError("obstacles.mode must be 'random' or 'fixed'")

    _need(isinstance(eff["model"], dict) and "kind" in eff["model"],
          "model must be an object with a kind")
    try:
        build_model(eff["model"])
    except (ValueError, OSError, KeyError) as err:
        raise ConfigError("model spec rejected: %s" % err) from None
    sweep_p = eff["sweep_p"]
    _need(isinstance(sweep_p, list) and sweep_p, "sweep_p must be a nonempty list")
    for v in sweep_p:
        p = _num(v, "sweep_p entry", positive=True)
        _need(p < 1.0, "sweep_p entries must be below 1")
    return eff


@dataclass(frozen=True)
class RunConfig:
    effective: dict

    @property
    def sweep_p(self):
        return list(self.effective["sweep_p"])

    @property
    def risk_p(self):
        return self.effective["risk"]["p"]

    @property
    def seed(self):
        return self.effective["seed"]

    def sim_params(self) -> SimParams:
        e = self.effective
        obs = e["obstacles"]
        if obs["mode"] == "random":
            obstacles = ObstacleRandomization(
                count_min=obs["count"][0], count_max=obs["count"][1],
                x_range=tuple(obs["x"]), y_range=tuple(obs["y"]),
                radius_range=tuple(obs["radius"]),
                start_clearance=obs["start_clearance"],
                min_gap=obs["min_gap"])
        else:
            obstacles = tuple(Obstacle(center=tuple(i["center"]),
                                       combined_radius=i["radius"])
                              for i in obs["items"])
        return SimParams(
            dt=e["dt"], steps=e["steps"], trials=e["trials"], speed=e["speed"],
            direction=tuple(e["direction"]),
            start=RomState(*e["start"]),
            barrier=BarrierConfig(lam=e["barrier"]["lambda"],
                                  gamma=e["barrier"]["gamma"]),
            k_interval=e["risk"]["k"], delta=e["risk"]["delta"],
            sigma_floor=e["risk"]["sigma"],
            input_box=tuple(tuple(b) for b in e["input_box"]),
            history_len=e["history_len"], model_spec=dict(e["model"]),
            obstacles=obstacles, base_seed=e["seed"])

    def hash(self) -> str:
        canonical = json.dumps(self.effective, sort_keys=True,
                               separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()


def load_config(path=None, overrides=None) -> RunConfig:
    """Read a config file (or defaults), apply flag overrides, validate.

    Resolution order for the file: explicit path, then the VELOGUARD_CONFIG
    environment variable, then built-in defaults.
    """
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH) or None
    if path is None:
        doc = {}
    else:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
        except FileNotFoundError:
            raise ConfigError("config file not found: %s" % path) from None
        except json.JSONDecodeError as err:
            raise ConfigError("config file is not valid JSON: %s" % err) from None
        if not isinstance(doc, dict):
            raise ConfigError("config top level must be an object")

    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "seed":
            doc["seed"] = value
        elif key == "trials":
            doc["trials"] = value
        elif key == "steps":
            doc["steps"] = value
        elif key == "risk_p":
            doc.setdefault("risk", {})
            if not isinstance(doc["risk"], dict):
                raise ConfigError("risk must be an object")
            doc["risk"]["p"] = value
        elif key == "sweep_p":
            doc["sweep_p"] = list(value)
        else:
            raise ConfigError("unknown override %r" % key)

    return RunConfig(effective=validate_config(doc))
