"""Export of trained decoders in the shield-cvae-1 format.

The weight file is canonical JSON (sorted keys, compact separators, one
trailing newline); a consumer that reserializes it reproduces the bytes.
A probe file with reference forward passes is written alongside so any
consumer can verify agreement without access to this package.
"""

import json
import os

import numpy as np

from .dataset import FEATURES_PER_PAIR
from .model import TrainedDecoder, decoder_forward

FORMAT_VERSION = "shield-cvae-1"
DEFAULT_PROBE_CASES = 10


class ExportError(ValueError):
    """Model violates the weight format contract."""


def _check(dec: TrainedDecoder):
    if dec.output_dim != 3:
        raise ExportError("decoder output dimension must be 3, found %d"
                          % dec.output_dim)
    for i, (weight, bias, activation) in enumerate(dec.layers):
        if activation not in ("relu", "linear"):
            raise ExportError("layer %d: activation %r is not portable"
                              % (i, activation))
        if weight.ndim != 2 or bias.shape != (weight.shape[0],):
            raise ExportError("layer %d: malformed shapes" % i)
    if np.any(dec.in_scale <= 0.0) or np.any(dec.out_scale <= 0.0):
        raise ExportError("normalization scales must be positive")


def serialize_weights(dec: TrainedDecoder) -> str:
    _check(dec)
    doc = {
        "format_version": FORMAT_VERSION,
        "context_len": int(dec.context_len),
        "latent_dim": int(dec.latent_dim),
        "input_normalization": {
            "mean": [float(v) for v in dec.in_mean],
            "scale": [float(v) for v in dec.in_scale],
        },
        "output_normalization": {
            "mean": [float(v) for v in dec.out_mean],
            "scale": [float(v) for v in dec.out_scale],
        },
        "layers": [
            {"rows": int(w.shape[0]),
             "cols": int(w.shape[1]),
             "weights": [float(v) for v in w.reshape(-1)],
             "bias": [float(v) for v in b],
             "activation": act}
            for w, b, act in dec.layers
        ],
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n"


def export_weights(dec: TrainedDecoder, path) -> str:
    """Write the canonical weight file; returns the serialized text."""
    text = serialize_weights(dec)
    tmp = str(path) + ".tmp"
    with open(tmp, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)
    return text


def make_probe_cases(dec: TrainedDecoder, n=DEFAULT_PROBE_CASES, seed=0):
    """Reference inputs/outputs spanning the trained operating range.

    Windows are drawn around the training normalization statistics so the
    cases exercise the same region the network saw; expected outputs come
    from the reference forward pass.
    """
    _check(dec)
    rng = np.random.default_rng(seed)
    cases = []
    for _ in range(n):
        ctx = dec.in_mean + dec.in_scale * rng.standard_normal(len(dec.in_mean))
        states = []
        commands = []
        for i in range(dec.context_len):
            chunk = ctx[FEATURES_PER_PAIR * i:FEATURES_PER_PAIR * (i + 1)]
            states.append([float(v) for v in chunk[:3]])
            commands.append([float(v) for v in chunk[3:]])
        z = rng.standard_normal(dec.latent_dim)
        expected = decoder_forward(dec, ctx, z)
        cases.append({
            "states": states,
            "commands": commands,
            "z": [float(v) for v in z],
            "expected": [float(v) for v in expected],
        })
    return cases


def write_probe(dec: TrainedDecoder, path, n=DEFAULT_PROBE_CASES, seed=0):
    cases = make_probe_cases(dec, n=n, seed=seed)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"cases": cases}, fh, sort_keys=True,
                  separators=(",", ":"))
        fh.write("\n")
    return cases
