"""Offline trainer for generative tracking-residual models.

Ingests rollout logs (timestamp, planar state, velocity command), extracts
per-step tracking residuals, trains a conditional variational autoencoder
on (history window -> residual), and exports the decoder in the portable
shield-cvae-1 JSON format together with a probe file and a training report.
The runtime that consumes the weights is a separate package; the only
coupling is the file format.
"""

from .dataset import (DatasetError, RolloutDataset, TrainingPairs,
                      context_matrix, extract_residuals, load_rollout_csv)
from .export import ExportError, export_weights, serialize_weights, write_probe
from .model import TrainConfig, TrainedDecoder, TrainingError, decoder_forward, train

__all__ = [
    "DatasetError",
    "ExportError",
    "RolloutDataset",
    "TrainConfig",
    "TrainedDecoder",
    "TrainingError",
    "TrainingPairs",
    "context_matrix",
    "decoder_forward",
    "export_weights",
    "extract_residuals",
    "load_rollout_csv",
    "serialize_weights",
    "train",
    "write_probe",
]
