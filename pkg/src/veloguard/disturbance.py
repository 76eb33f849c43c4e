"""Conditional disturbance models.

Every model answers two queries about the velocity-level residual d given a
history window of (state, command) pairs: its first two moments, and a sample.
Moments must be deterministic for a fixed window, so sampling-based
implementations pin their sample count and derive seeds from their inputs
rather than drawing from a shared stream.

Implementations: an analytic Gaussian, a clipped multivariate Student-t, an
empirical replay of recorded residuals, and a feed-forward generative decoder
loaded from a weight file (format tag "shield-cvae-1", see docs/weight-format.md).
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .rom import Command, Disturbance, HistoryWindow, RomState

FORMAT_VERSION = "shield-cvae-1"
DEFAULT_MOMENT_SAMPLES = 256
_SYM_EPS = 1e-9


class WeightFormatError(ValueError):
    """Weight file is structurally invalid or unparseable."""


class WeightVersionError(WeightFormatError):
    """Weight file carries an unsupported format_version."""


class WeightShapeError(WeightFormatError):
    """Layer shapes do not chain, or the output dimension is not 3."""


@dataclass(frozen=True)
class DisturbanceMoments:
    """Conditional mean (3,) and covariance (3, 3) of the residual."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(3)
        cov = np.asarray(self.cov, dtype=float).reshape(3, 3)
        if not np.all(np.isfinite(mean)) or not np.all(np.isfinite(cov)):
            raise ValueError("moments must be finite")
        if np.max(np.abs(cov - cov.T)) > _SYM_EPS:
            raise ValueError("covariance must be symmetric within 1e-9")
        if float(np.min(np.linalg.eigvalsh(0.5 * (cov + cov.T)))) < -_SYM_EPS:
            raise ValueError("covariance must be PSD within 1e-9")
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    def directional_variance(self, e) -> float:
        """e^T cov_xy e for a planar unit direction e."""
        ex, ey = e
        c = self.cov
        return float(ex * ex * c[0, 0] + 2.0 * ex * ey * c[0, 1] + ey * ey * c[1, 1])


ZERO_MOMENTS = DisturbanceMoments(mean=np.zeros(3), cov=np.zeros((3, 3)))


def derive_seed(*parts):
    """Deterministic SeedSequence from integers and/or byte strings."""
    entropy = []
    for p in parts:
        if isinstance(p, (bytes, bytearray)):
            digest = hashlib.sha256(bytes(p)).digest()
            entropy.append(int.from_bytes(digest[:16], "little"))
        else:
            entropy.append(int(p))
    return np.random.SeedSequence(entropy)


def _psd_factor(matrix):
    """Lower factor L with L L^T = matrix, tolerating PSD-singular input."""
    m = np.asarray(matrix, dtype=float).reshape(3, 3)
    if np.max(np.abs(m - m.T)) > _SYM_EPS:
        raise ValueError("scale matrix must be symmetric")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(0.5 * (m + m.T))
        if float(vals.min()) < -_SYM_EPS * max(1.0, float(vals.max())):
            raise ValueError("scale matrix must be PSD") from None
        return vecs * np.sqrt(np.clip(vals, 0.0, None))


class ModelInterface:
    """Behavioral contract for conditional disturbance models."""

    def moments(self, window: HistoryWindow) -> DisturbanceMoments:
        raise NotImplementedError

    def sample(self, window: HistoryWindow, rng) -> Disturbance:
        raise NotImplementedError


class GaussianModel(ModelInterface):
    """Analytic Gaussian residual, context-independent."""

    def __init__(self, mean, cov):
        self._moments = DisturbanceMoments(mean=np.asarray(mean, dtype=float),
                                           cov=np.asarray(cov, dtype=float))
        self._factor = _psd_factor(self._moments.cov)

    def moments(self, window):
        return self._moments

    def sample(self, window, rng):
        d = self._moments.mean + self._factor @ rng.standard_normal(3)
        return Disturbance(float(d[0]), float(d[1]), float(d[2]))


def zero_model():
    return GaussianModel(np.zeros(3), np.zeros((3, 3)))


def _t_draw(factor, dof, clip_radius, rng):
    z = factor @ rng.standard_normal(3)
    w = rng.chisquare(dof)
    x = z * math.sqrt(dof / w)
    n = math.sqrt(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])
    if n > clip_radius:
        x *= clip_radius / n
    return x


def student_t_sample(dof, scale, clip_radius, rng) -> Disturbance:
    """One draw from a zero-mean multivariate Student-t, norm-clipped.

    dof is the degrees of freedom, scale the 3x3 PSD scale matrix, and
    clip_radius the maximum Euclidean norm of the returned residual.
    """
    if not dof > 0.0:
        raise ValueError("dof must be positive")
    if not clip_radius > 0.0:
        raise ValueError("clip_radius must be positive")
    x = _t_draw(_psd_factor(scale), dof, clip_radius, rng)
    return Disturbance(float(x[0]), float(x[1]), float(x[2]))


class StudentTModel(ModelInterface):
    """Clipped multivariate Student-t residual, context-independent.

    Moments have no closed form once the tails are clipped, so they are
    estimated once by fixed-seed Monte Carlo and cached; the seed is derived
    from the model parameters, keeping moments deterministic.
    """

    def __init__(self, dof, scale, clip_radius, moment_samples=4096):
        if not dof > 0.0:
            raise ValueError("dof must be positive")
        if not clip_radius > 0.0:
            raise ValueError("clip_radius must be positive")
        if moment_samples < 2:
            raise ValueError("moment_samples must be >= 2")
        self.dof = float(dof)
        self.scale = np.asarray(scale, dtype=float).reshape(3, 3)
        self.clip_radius = float(clip_radius)
        self.moment_samples = int(moment_samples)
        self._factor = _psd_factor(self.scale)
        self._moments = None

    def moments(self, window):
        if self._moments is None:
            seed = derive_seed(0x57, self.scale.tobytes(),
                               int(self.dof * 2 ** 20), int(self.clip_radius * 2 ** 20),
                               self.moment_samples)
            rng = np.random.default_rng(seed)
            draws = np.empty((self.moment_samples, 3))
            for i in range(self.moment_samples):
                draws[i] = _t_draw(self._factor, self.dof, self.clip_radius, rng)
            self._moments = DisturbanceMoments(mean=draws.mean(axis=0),
                                               cov=np.cov(draws, rowvar=False, ddof=1))
        return self._moments

    def sample(self, window, rng):
        x = _t_draw(self._factor, self.dof, self.clip_radius, rng)
        return Disturbance(float(x[0]), float(x[1]), float(x[2]))


class ReplayModel(ModelInterface):
    """Empirical replay of recorded residuals; its own moment oracle."""

    def __init__(self, residuals):
        r = np.asarray(residuals, dtype=float)
        if r.ndim != 2 or r.shape[1] != 3 or r.shape[0] < 2:
            raise ValueError("residuals must have shape (n >= 2, 3)")
        self.residuals = r
        self._moments = DisturbanceMoments(mean=r.mean(axis=0),
                                           cov=np.cov(r, rowvar=False, ddof=1))

    def moments(self, window):
        return self._moments

    def sample(self, window, rng):
        row = self.residuals[rng.integers(0, len(self.residuals))]
        return Disturbance(float(row[0]), float(row[1]), float(row[2]))


@dataclass(frozen=True)
class DecoderLayer:
    weight: np.ndarray
    bias: np.ndarray
    activation: str


@dataclass(frozen=True)
class DecoderWeights:
    """Feed-forward decoder of a trained generative residual model.

    The input is the normalized flattened context (6 features per history
    entry, context_len entries) concatenated with a latent vector; the output
    is denormalized into the 3 residual components.
    """

    layers: tuple
    latent_dim: int
    context_len: int
    in_mean: np.ndarray
    in_scale: np.ndarray
    out_mean: np.ndarray
    out_scale: np.ndarray

    def __post_init__(self):
        if self.context_len < 1:
            raise WeightShapeError("context_len must be >= 1")
        if self.latent_dim < 1:
            raise WeightShapeError("latent_dim must be >= 1")
        if not self.layers:
            raise WeightShapeError("at least one layer required")
        ctx_dim = 6 * self.context_len
        expect = ctx_dim + self.latent_dim
        for i, layer in enumerate(self.layers):
            if layer.activation not in ("relu", "linear"):
                raise WeightFormatError(
                    "layer %d: unsupported activation %r" % (i, layer.activation))
            rows, cols = layer.weight.shape
            if cols != expect:
                raise WeightShapeError(
                    "layer %d: expected %d input columns, found %d" % (i, expect, cols))
            if layer.bias.shape != (rows,):
                raise WeightShapeError("layer %d: bias length mismatch" % i)
            expect = rows
        if expect != 3:
            raise WeightShapeError(
                "final layer must output 3 components, found %d" % expect)
        for name, arr, dim in (("input mean", self.in_mean, ctx_dim),
                               ("input scale", self.in_scale, ctx_dim),
                               ("output mean", self.out_mean, 3),
                               ("output scale", self.out_scale, 3)):
            if arr.shape != (dim,):
                raise WeightShapeError("%s must have length %d" % (name, dim))
        if np.any(self.in_scale <= 0.0) or np.any(self.out_scale <= 0.0):
            raise WeightFormatError("normalization scales must be positive")


def context_vector(window: HistoryWindow, context_len: int) -> np.ndarray:
    """Flatten the last context_len history pairs, oldest first.

    Six features per pair: p_x, p_y, theta, v_x, v_y, omega.  A window shorter
    than context_len is front-padded by repeating its oldest pair, so early
    steps still produce a full-size context.
    """
    n = len(window)
    if n == 0:
        raise ValueError("history window is empty")
    states = window.states[-context_len:]
    commands = window.commands[-context_len:]
    pad = context_len - len(states)
    if pad > 0:
        states = (states[0],) * pad + tuple(states)
        commands = (commands[0],) * pad + tuple(commands)
    out = np.empty(6 * context_len)
    for i, (x, u) in enumerate(zip(states, commands)):
        out[6 * i:6 * i + 6] = (x.p_x, x.p_y, x.theta, u.v_x, u.v_y, u.omega)
    return out


def decoder_infer(w: DecoderWeights, window: HistoryWindow, z) -> Disturbance:
    """Deterministic decoder forward pass for one latent draw."""
    z = np.asarray(z, dtype=float)
    if z.shape != (w.latent_dim,):
        raise WeightShapeError(
            "latent vector must have length %d" % w.latent_dim)
    ctx = (context_vector(window, w.context_len) - w.in_mean) / w.in_scale
    h = np.concatenate([ctx, z])
    for layer in w.layers:
        h = layer.weight @ h + layer.bias
        if layer.activation == "relu":
            np.maximum(h, 0.0, out=h)
    out = h * w.out_scale + w.out_mean
    return Disturbance(float(out[0]), float(out[1]), float(out[2]))


class DecoderModel(ModelInterface):
    """Loaded generative decoder queried through latent-space sampling."""

    def __init__(self, weights: DecoderWeights, samples=DEFAULT_MOMENT_SAMPLES,
                 base_seed=0):
        if samples < 2:
            raise ValueError("samples must be >= 2")
        self.weights = weights
        self.samples = int(samples)
        self.base_seed = int(base_seed)

    def moments(self, window):
        ctx = context_vector(window, self.weights.context_len)
        seed = derive_seed(self.base_seed, ctx.tobytes())
        return moments_by_sampling(self, window, self.samples, seed)

    def sample(self, window, rng):
        z = rng.standard_normal(self.weights.latent_dim)
        return decoder_infer(self.weights, window, z)


def moments_by_sampling(model, window, M, seed) -> DisturbanceMoments:
    """Sample mean and unbiased covariance over M model draws.

    The caller supplies the seed (derived e.g. from a base seed and the step
    index) so repeated queries are reproducible.
    """
    if M < 2:
        raise ValueError("M must be >= 2 for an unbiased covariance")
    rng = np.random.default_rng(seed)
    draws = np.empty((M, 3))
    for i in range(M):
        d = model.sample(window, rng)
        draws[i] = (d.d_x, d.d_y, d.d_theta)
    cov = np.cov(draws, rowvar=False, ddof=1)
    # exact-zero spread must map to an exactly zero covariance
    if np.max(draws, axis=0).tolist() == np.min(draws, axis=0).tolist():
        cov = np.zeros((3, 3))
    return DisturbanceMoments(mean=draws.mean(axis=0), cov=cov)


def _as_float_list(node, what):
    if not isinstance(node, list) or not all(
            isinstance(v, (int, float)) and not isinstance(v, bool) for v in node):
        raise WeightFormatError("%s must be a list of numbers" % what)
    return [float(v) for v in node]


def _parse_normalization(node, what):
    if not isinstance(node, dict) or set(node) != {"mean", "scale"}:
        raise WeightFormatError("%s must hold exactly {mean, scale}" % what)
    return (np.array(_as_float_list(node["mean"], what + ".mean")),
            np.array(_as_float_list(node["scale"], what + ".scale")))


def parse_weights(text: str) -> DecoderWeights:
    """Parse and shape-validate a shield-cvae-1 document."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise WeightFormatError("not valid JSON: %s" % err) from None
    if not isinstance(doc, dict):
        raise WeightFormatError("top level must be an object")
    required = {"format_version", "context_len", "latent_dim",
                "input_normalization", "output_normalization", "layers"}
    if set(doc) != required:
        missing = required - set(doc)
        extra = set(doc) - required
        raise WeightFormatError(
            "bad field set: missing %s, unexpected %s" % (sorted(missing), sorted(extra)))
    if doc["format_version"] != FORMAT_VERSION:
        raise WeightVersionError(
            "unsupported format_version %r (expected %r)"
            % (doc["format_version"], FORMAT_VERSION))
    if not isinstance(doc["context_len"], int) or not isinstance(doc["latent_dim"], int):
        raise WeightFormatError("context_len and latent_dim must be integers")
    in_mean, in_scale = _parse_normalization(doc["input_normalization"],
                                             "input_normalization")
    out_mean, out_scale = _parse_normalization(doc["output_normalization"],
                                               "output_normalization")
    if not isinstance(doc["layers"], list) or not doc["layers"]:
        raise WeightFormatError("layers must be a nonempty list")
    layers = []
    for i, node in enumerate(doc["layers"]):
        if not isinstance(node, dict) or set(node) != {"rows", "cols", "weights",
                                                       "bias", "activation"}:
            raise WeightFormatError("layer %d: bad field set" % i)
        rows, cols = node["rows"], node["cols"]
        if not isinstance(rows, int) or not isinstance(cols, int) \
                or rows < 1 or cols < 1:
            raise WeightFormatError("layer %d: rows/cols must be positive ints" % i)
        flat = _as_float_list(node["weights"], "layer %d weights" % i)
        if len(flat) != rows * cols:
            raise WeightShapeError(
                "layer %d: expected %d weights, found %d" % (i, rows * cols, len(flat)))
        bias = _as_float_list(node["bias"], "layer %d bias" % i)
        if len(bias) != rows:
            raise WeightShapeError("layer %d: expected %d biases" % (i, rows))
        layers.append(DecoderLayer(
            weight=np.array(flat).reshape(rows, cols),
            bias=np.array(bias),
            activation=node["activation"]))
    return DecoderWeights(layers=tuple(layers),
                          latent_dim=doc["latent_dim"],
                          context_len=doc["context_len"],
                          in_mean=in_mean, in_scale=in_scale,
                          out_mean=out_mean, out_scale=out_scale)


def load_weights(path) -> DecoderWeights:
    """Load decoder weights from a shield-cvae-1 file.

    Raises FileNotFoundError for a missing file, WeightVersionError for an
    unsupported format tag, WeightShapeError when layer shapes do not chain,
    and WeightFormatError for any other structural defect.
    """
    with open(path, "r", encoding="utf-8") as fh:
        return parse_weights(fh.read())


def serialize_weights(w: DecoderWeights) -> str:
    """Canonical shield-cvae-1 text: sorted keys, compact separators, one
    trailing newline.  Reserializing a loaded file reproduces it byte for byte."""
    doc = {
        "format_version": FORMAT_VERSION,
        "context_len": int(w.context_len),
        "latent_dim": int(w.latent_dim),
        "input_normalization": {"mean": [float(v) for v in w.in_mean],
                                "scale": [float(v) for v in w.in_scale]},
        "output_normalization": {"mean": [float(v) for v in w.out_mean],
                                 "scale": [float(v) for v in w.out_scale]},
        "layers": [
            {"rows": int(l.weight.shape[0]),
             "cols": int(l.weight.shape[1]),
             "weights": [float(v) for v in l.weight.reshape(-1)],
             "bias": [float(v) for v in l.bias],
             "activation": l.activation}
            for l in w.layers
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def save_weights(w: DecoderWeights, path):
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(serialize_weights(w))
    os.replace(tmp, path)


def build_model(spec: dict) -> ModelInterface:
    """Construct a disturbance model from a plain configuration mapping."""
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ValueError("model spec must be a mapping with a 'kind' key")
    kind = spec["kind"]
    params = {k: v for k, v in spec.items() if k != "kind"}
    if kind == "zero":
        _reject_unknown(params, set())
        return zero_model()
    if kind == "gaussian":
        _reject_unknown(params, {"mean", "cov"})
        return GaussianModel(params.get("mean", np.zeros(3)),
                             params.get("cov", np.zeros((3, 3))))
    if kind == "student_t":
        _reject_unknown(params, {"dof", "scale", "clip_radius", "moment_samples"})
        scale = params.get("scale", 0.1)
        mat = np.asarray(scale, dtype=float)
        if mat.ndim == 0:
            mat = float(mat) ** 2 * np.eye(3)
        return StudentTModel(dof=params.get("dof", 3.0), scale=mat,
                             clip_radius=params.get("clip_radius", 2.0),
                             moment_samples=params.get("moment_samples", 4096))
    if kind == "replay":
        _reject_unknown(params, {"residuals", "path"})
        if "path" in params:
            residuals = np.loadtxt(params["path"], delimiter=",", ndmin=2)
        else:
            residuals = params["residuals"]
        return ReplayModel(residuals)
    if kind == "decoder":
        _reject_unknown(params, {"path", "samples", "seed"})
        return DecoderModel(load_weights(params["path"]),
                            samples=params.get("samples", DEFAULT_MOMENT_SAMPLES),
                            base_seed=params.get("seed", 0))
    raise ValueError("unknown model kind %r" % kind)


def _reject_unknown(params, allowed):
    unknown = set(params) - allowed
    if unknown:
        raise ValueError("unknown model spec keys: %s" % sorted(unknown))
