"""Conditional variational autoencoder over (context window, residual).

The encoder and the reparameterization exist only during training; what
leaves this module is the decoder: a ReLU/linear stack that maps a
normalized context window plus a standard-normal latent to a residual.
Everything runs in float64 so the exported weights reproduce the training
forward pass bit-for-bit apart from summation order.
"""

import math
from dataclasses import dataclass

import numpy as np
import torch
from torch import nn

from .dataset import FEATURES_PER_PAIR, TrainingPairs

MIN_PAIRS = 100
_SCALE_FLOOR = 1e-6


class TrainingError(RuntimeError):
    """Training diverged or received unusable inputs."""


@dataclass(frozen=True)
class TrainConfig:
    context_len: int = 4
    latent_dim: int = 4
    hidden: tuple = (64, 64)
    epochs: int = 200
    lr: float = 1e-3
    batch_size: int = 256
    beta: float = 1.0
    val_split: float = 0.2
    seed: int = 0

    def __post_init__(self):
        if self.context_len < 1:
            raise ValueError("context_len must be >= 1")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if any(int(h) < 1 for h in self.hidden):
            raise ValueError("hidden sizes must be positive")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.lr <= 0.0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.beta < 0.0:
            raise ValueError("beta must be >= 0")
        if not 0.0 < self.val_split < 1.0:
            raise ValueError("val_split must be in (0, 1)")


@dataclass(frozen=True)
class TrainedDecoder:
    """Decoder weights plus the normalization frozen at training time.

    layers is a tuple of (weight (rows, cols), bias (rows,), activation)
    with activation "relu" or "linear"; the forward-pass semantics are the
    ones documented for the shield-cvae-1 format.
    """

    layers: tuple
    context_len: int
    latent_dim: int
    in_mean: np.ndarray
    in_scale: np.ndarray
    out_mean: np.ndarray
    out_scale: np.ndarray

    @property
    def output_dim(self):
        return self.layers[-1][0].shape[0]

    def conditional_mean(self, contexts, draws: int, rng) -> np.ndarray:
        """Monte Carlo estimate of E[d | context] over standard-normal z."""
        contexts = np.atleast_2d(np.asarray(contexts, dtype=float))
        acc = np.zeros((len(contexts), self.output_dim))
        for _ in range(draws):
            z = rng.standard_normal(self.latent_dim)
            acc += forward_batch(self, contexts, z)
        return acc / draws


def forward_batch(dec: TrainedDecoder, contexts, z) -> np.ndarray:
    """Decoder forward pass for a batch of contexts sharing one latent."""
    h = (np.atleast_2d(contexts) - dec.in_mean) / dec.in_scale
    h = np.concatenate([h, np.broadcast_to(z, (len(h), dec.latent_dim))], axis=1)
    for weight, bias, activation in dec.layers:
        h = h @ weight.T + bias
        if activation == "relu":
            np.maximum(h, 0.0, out=h)
    return h * dec.out_scale + dec.out_mean


def decoder_forward(dec: TrainedDecoder, context, z) -> np.ndarray:
    """Reference forward pass for a single flattened context window."""
    context = np.asarray(context, dtype=float)
    z = np.asarray(z, dtype=float)
    if context.shape != (FEATURES_PER_PAIR * dec.context_len,):
        raise ValueError("context must have length %d"
                         % (FEATURES_PER_PAIR * dec.context_len))
    if z.shape != (dec.latent_dim,):
        raise ValueError("latent vector must have length %d" % dec.latent_dim)
    return forward_batch(dec, context[None, :], z)[0]


def _mlp(sizes, final):
    layers = []
    for a, b in zip(sizes, sizes[1:]):
        layers += [nn.Linear(a, b), nn.ReLU()]
    layers.append(nn.Linear(sizes[-1], final))
    return nn.Sequential(*layers)


def train(pairs: TrainingPairs, config: TrainConfig):
    """Fit the model; returns (TrainedDecoder, report text).

    Deterministic for a given config: the split, the initialization, and
    every latent draw derive from config.seed.
    """
    if config.context_len != pairs.context_len:
        raise TrainingError("pairs were extracted with context_len %d, "
                            "config says %d" % (pairs.context_len,
                                                config.context_len))
    m = len(pairs)
    if m < MIN_PAIRS:
        raise TrainingError("need at least %d training pairs, got %d"
                            % (MIN_PAIRS, m))

    rng = np.random.default_rng(config.seed)
    torch.manual_seed(config.seed)

    perm = rng.permutation(m)
    n_val = min(max(1, int(round(m * config.val_split))), m - 1)
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    ctx_train = pairs.contexts[train_idx]
    res_train = pairs.residuals[train_idx]
    ctx_val = pairs.contexts[val_idx]
    res_val = pairs.residuals[val_idx]

    in_mean = ctx_train.mean(axis=0)
    in_scale = np.maximum(ctx_train.std(axis=0), _SCALE_FLOOR)
    out_mean = res_train.mean(axis=0)
    out_scale = np.maximum(res_train.std(axis=0), _SCALE_FLOOR)

    def norm(ctx, res):
        return (torch.as_tensor((ctx - in_mean) / in_scale),
                torch.as_tensor((res - out_mean) / out_scale))

    tc, tr = norm(ctx_train, res_train)
    vc, vr = norm(ctx_val, res_val)

    ctx_dim = FEATURES_PER_PAIR * config.context_len
    encoder = _mlp((ctx_dim + 3,) + tuple(config.hidden),
                   2 * config.latent_dim).double()
    decoder = _mlp((ctx_dim + config.latent_dim,) + tuple(config.hidden),
                   3).double()
    optim = torch.optim.Adam(list(encoder.parameters())
                             + list(decoder.parameters()), lr=config.lr)

    def elbo_terms(ctx, res, sample):
        mu, logvar = encoder(torch.cat([ctx, res], dim=1)).chunk(2, dim=1)
        z = mu
        if sample:
            z = mu + torch.randn_like(mu) * torch.exp(0.5 * logvar)
        pred = decoder(torch.cat([ctx, z], dim=1))
        recon = ((pred - res) ** 2).sum(dim=1).mean()
        kl = 0.5 * (mu ** 2 + torch.exp(logvar) - 1.0 - logvar).sum(dim=1).mean()
        return recon, kl

    train_loss = val_loss = math.nan
    for epoch in range(config.epochs):
        order = torch.randperm(len(tc))
        total = 0.0
        for i in range(0, len(order), config.batch_size):
            batch = order[i:i + config.batch_size]
            recon, kl = elbo_terms(tc[batch], tr[batch], sample=True)
            loss = recon + config.beta * kl
            if not torch.isfinite(loss):
                raise TrainingError("non-finite loss at epoch %d" % epoch)
            optim.zero_grad()
            loss.backward()
            optim.step()
            total += float(loss.detach()) * len(batch)
        train_loss = total / len(tc)
        with torch.no_grad():
            recon, kl = elbo_terms(vc, vr, sample=False)
            val_loss = float(recon + config.beta * kl)
        if not math.isfinite(val_loss):
            raise TrainingError("non-finite validation loss at epoch %d" % epoch)

    dec_layers = []
    linears = [mod for mod in decoder if isinstance(mod, nn.Linear)]
    for i, lin in enumerate(linears):
        activation = "relu" if i < len(linears) - 1 else "linear"
        dec_layers.append((lin.weight.detach().numpy().copy(),
                           lin.bias.detach().numpy().copy(), activation))
    trained = TrainedDecoder(layers=tuple(dec_layers),
                             context_len=config.context_len,
                             latent_dim=config.latent_dim,
                             in_mean=in_mean, in_scale=in_scale,
                             out_mean=out_mean, out_scale=out_scale)

    report = _build_report(trained, config, ctx_val, res_val,
                           len(train_idx), len(val_idx),
                           train_loss, val_loss, rng)
    return trained, report


def _build_report(trained, config, ctx_val, res_val, n_train, n_val,
                  train_loss, val_loss, rng):
    # deterministic-latent reconstruction error in raw units
    mean_pred = trained.conditional_mean(ctx_val, draws=64, rng=rng)
    recon_rms = float(np.sqrt(np.mean((mean_pred - res_val) ** 2)))

    # moment match: sampled residual statistics vs the held-out set
    cap = min(len(ctx_val), 256)
    draws = np.concatenate([
        forward_batch(trained, ctx_val[:cap],
                      rng.standard_normal(config.latent_dim))
        for _ in range(32)])
    mean_err = np.abs(draws.mean(axis=0) - res_val.mean(axis=0))
    std_ratio = draws.std(axis=0) / np.maximum(res_val.std(axis=0),
                                               _SCALE_FLOOR)

    lines = [
        "pairs_train: %d" % n_train,
        "pairs_val: %d" % n_val,
        "context_len: %d" % config.context_len,
        "latent_dim: %d" % config.latent_dim,
        "hidden: %s" % ",".join(str(int(h)) for h in config.hidden),
        "epochs: %d" % config.epochs,
        "seed: %d" % config.seed,
        "final_train_loss: %.6g" % train_loss,
        "final_val_loss: %.6g" % val_loss,
        "val_mean_recon_rms: %.6g" % recon_rms,
        "val_moment_mean_abs_error: %s"
        % " ".join("%.6g" % v for v in mean_err),
        "val_moment_std_ratio: %s"
        % " ".join("%.6g" % v for v in std_ratio),
    ]
    return "\n".join(lines) + "\n"
