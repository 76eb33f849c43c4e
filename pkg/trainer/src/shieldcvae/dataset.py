"""Rollout log ingestion and residual extraction.

A rollout log is a CSV stream of (timestamp, px, py, theta, vx, vy, omega)
rows sampled at a fixed period.  Timestamps must increase; a jump of 1.5x
the sequence period or more is treated as a recording gap and splits the
log into independent sequences, while any other deviation from the period
is an error.  The tracking residual of step k is the velocity the platform
actually realized minus the velocity it was commanded:

    d_k = (x_{k+1} - x_k) / dt - u_k

with the yaw difference wrapped to (-pi, pi] before dividing, so the
extraction is exactly invertible: x_{k+1} = x_k + dt * (u_k + d_k) up to a
whole number of turns in yaw.
"""

import math
from dataclasses import dataclass

import numpy as np

HEADER = "timestamp,px,py,theta,vx,vy,omega"
GAP_FACTOR = 1.5
_DT_REL_TOL = 1e-6

# per history pair, oldest pair first in the flattened context
FEATURES_PER_PAIR = 6


class DatasetError(ValueError):
    """Rollout log is malformed or violates the sampling contract."""


@dataclass(frozen=True)
class Sequence:
    """One contiguous constant-period run of samples."""

    timestamps: np.ndarray  # (n,)
    states: np.ndarray      # (n, 3) px, py, theta
    commands: np.ndarray    # (n, 3) vx, vy, omega
    dt: float


@dataclass(frozen=True)
class RolloutDataset:
    sequences: tuple

    @property
    def samples(self):
        return sum(len(s.timestamps) for s in self.sequences)


@dataclass(frozen=True)
class TrainingPairs:
    """Flattened context windows with their target residuals."""

    contexts: np.ndarray   # (m, 6 * context_len)
    residuals: np.ndarray  # (m, 3)
    context_len: int

    def __len__(self):
        return len(self.residuals)


def _parse_rows(lines):
    rows = []
    for ln in lines:
        ln = ln.strip()
        if not ln or ln.startswith("#"):
            continue
        parts = ln.split(",")
        if len(parts) != 7:
            raise DatasetError("expected 7 fields per row, got %r" % ln)
        try:
            rows.append([float(v) for v in parts])
        except ValueError:
            raise DatasetError("non-numeric row: %r" % ln) from None
    return rows


def load_rollout_csv(path) -> RolloutDataset:
    """Read a rollout log and split it into constant-period sequences."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln for ln in fh]
    stripped = [ln.strip() for ln in lines if ln.strip() and not ln.strip().startswith("#")]
    if not stripped or stripped[0] != HEADER:
        raise DatasetError("log must start with header %r" % HEADER)
    rows = _parse_rows(stripped[1:])
    if not rows:
        raise DatasetError("log contains no samples")
    data = np.asarray(rows, dtype=float)

    sequences = []
    begin = 0
    seq_dt = None
    for i in range(1, len(data)):
        step = data[i, 0] - data[i - 1, 0]
        if step <= 0.0:
            raise DatasetError(
                "timestamps must increase (row %d steps by %g)" % (i, step))
        if seq_dt is None:
            seq_dt = step
            continue
        if abs(step - seq_dt) <= _DT_REL_TOL * seq_dt:
            continue
        if step >= GAP_FACTOR * seq_dt:
            sequences.append(_make_sequence(data[begin:i], seq_dt))
            begin = i
            seq_dt = None
            continue
        if i == begin + 2 and seq_dt >= GAP_FACTOR * step:
            # the single interval taken as the period was itself a gap
            # (isolated sample between two gaps); split there and restart
            # from the sample before this one
            sequences.append(_make_sequence(data[begin:i - 1], None))
            begin = i - 1
            seq_dt = step
            continue
        raise DatasetError(
            "inconsistent sample period at row %d: %g vs %g" % (i, step, seq_dt))
    sequences.append(_make_sequence(data[begin:], seq_dt))
    return RolloutDataset(sequences=tuple(sequences))


def _make_sequence(block, seq_dt):
    # a one-sample fragment has no measurable period; keep it with dt 0,
    # extraction skips it anyway
    return Sequence(timestamps=block[:, 0].copy(),
                    states=block[:, 1:4].copy(),
                    commands=block[:, 4:7].copy(),
                    dt=float(seq_dt) if seq_dt is not None else 0.0)


def _wrap_pm_pi(a):
    wrapped = np.remainder(a, 2.0 * math.pi)
    wrapped[wrapped > math.pi] -= 2.0 * math.pi
    return wrapped


def context_matrix(states, commands, context_len: int) -> np.ndarray:
    """Flattened windows of the last context_len (state, command) pairs.

    Row k corresponds to the window ending at sample index context_len-1+k;
    within a row the oldest pair comes first, six features per pair:
    px, py, theta, vx, vy, omega.
    """
    n = len(states)
    if context_len < 1:
        raise ValueError("context_len must be >= 1")
    m = n - context_len + 1
    if m <= 0:
        return np.empty((0, FEATURES_PER_PAIR * context_len))
    out = np.empty((m, FEATURES_PER_PAIR * context_len))
    for j in range(context_len):
        cols = slice(FEATURES_PER_PAIR * j, FEATURES_PER_PAIR * j + 3)
        out[:, cols] = states[j:j + m]
        cols = slice(FEATURES_PER_PAIR * j + 3, FEATURES_PER_PAIR * (j + 1))
        out[:, cols] = commands[j:j + m]
    return out


def extract_residuals(dataset: RolloutDataset, context_len: int) -> TrainingPairs:
    """Training pairs (window of context_len pairs, next-step residual).

    A window ends at sample k and its target is the residual of the
    transition k -> k+1, so a sequence of n samples yields
    n - context_len pairs; shorter sequences contribute nothing.
    """
    if context_len < 1:
        raise ValueError("context_len must be >= 1")
    ctx_blocks = []
    res_blocks = []
    for seq in dataset.sequences:
        n = len(seq.timestamps)
        if n < context_len + 1:
            continue
        diff = np.diff(seq.states, axis=0)
        diff[:, 2] = _wrap_pm_pi(diff[:, 2])
        residuals = diff / seq.dt - seq.commands[:-1]
        # window ending at k pairs with residual k; drop the last window,
        # which has no successor sample
        ctx_blocks.append(context_matrix(seq.states[:-1], seq.commands[:-1],
                                         context_len))
        res_blocks.append(residuals[context_len - 1:])
    if not ctx_blocks:
        return TrainingPairs(
            contexts=np.empty((0, FEATURES_PER_PAIR * context_len)),
            residuals=np.empty((0, 3)), context_len=context_len)
    return TrainingPairs(contexts=np.concatenate(ctx_blocks),
                         residuals=np.concatenate(res_blocks),
                         context_len=context_len)
