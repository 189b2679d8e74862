"""Autoencoder that compresses 60-d keyword indicators to binary latent bits."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import nn
from .errors import DataError, DimensionMismatch, EmptyData

INPUT_DIM = 60


@dataclass
class AeConfig:
    hidden: int = 32
    latent: int = 10
    lr: float = 3e-3
    weight_decay: float = 0.0
    batch_size: int = 32
    max_epochs: int = 400
    patience: int = 30
    val_fraction: float = 0.1
    threshold: float = 0.5
    seed: int = 0


@dataclass
class AeModel:
    encoder: nn.DenseNet
    decoder: nn.DenseNet
    binarize_threshold: float = 0.5
    history: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        if not 0.0 < self.binarize_threshold < 1.0:
            raise ValueError("binarize_threshold must lie strictly between 0 and 1")
        if self.encoder.dims != self.decoder.dims[::-1]:
            raise DimensionMismatch(f"encoder {self.encoder.dims} and decoder {self.decoder.dims} do not mirror")

    @property
    def latent_dim(self):
        return self.encoder.out_dim

    def reconstruct(self, X):
        z, _ = nn.forward(self.encoder, X)
        out, _ = nn.forward(self.decoder, z)
        return out

    def to_dict(self):
        return {
            "format_version": nn.FORMAT_VERSION,
            "kind": "autoencoder",
            "encoder": self.encoder.to_dict("encoder"),
            "decoder": self.decoder.to_dict("decoder"),
            "binarize_threshold": self.binarize_threshold,
        }

    @classmethod
    def from_dict(cls, d) -> "AeModel":
        if d.get("kind") != "autoencoder":
            raise DataError("not an autoencoder model document")
        return cls(nn.DenseNet.from_dict(d["encoder"]), nn.DenseNet.from_dict(d["decoder"]), d["binarize_threshold"])

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def build_ae(cfg: AeConfig, rng) -> AeModel:
    # encoder ends in a sigmoid so latents live in (0, 1) before thresholding
    enc = nn.DenseNet.build([INPUT_DIM, cfg.hidden, cfg.latent], rng, ["relu", "sigmoid"])
    dec = nn.DenseNet.build([cfg.latent, cfg.hidden, INPUT_DIM], rng, ["relu", "linear"])
    return AeModel(enc, dec, cfg.threshold)


def reconstruction_loss(m: AeModel, X) -> float:
    return nn.mse(m.reconstruct(X), X)[0]


def ae_gradients(m: AeModel, X):
    """MSE reconstruction loss and gradients for encoder params + decoder params."""
    z, enc_tape = nn.forward(m.encoder, X)
    out, dec_tape = nn.forward(m.decoder, z)
    loss, g = nn.mse(out, X)
    dec_grads, dz = nn.backward(m.decoder, dec_tape, g)
    enc_grads, _ = nn.backward(m.encoder, enc_tape, dz)
    return loss, enc_grads + dec_grads


def train_ae(data, cfg: AeConfig = None) -> AeModel:
    """Fit on reconstruction MSE with AdamW and early stopping; returns the best-validation model.

    Fewer than 10 samples leave nothing to hold out, so validation then reuses
    the training set.
    """
    cfg = cfg or AeConfig()
    X = np.asarray(data, dtype=np.float64)
    if X.size == 0 or len(X) == 0:
        raise EmptyData("autoencoder needs at least one sample")
    if X.ndim != 2 or X.shape[1] != INPUT_DIM:
        raise DimensionMismatch(f"indicator vectors must have length {INPUT_DIM}, got shape {X.shape}")
    rng = nn.make_rng(cfg.seed)
    model = build_ae(cfg, rng)
    n_val = int(round(cfg.val_fraction * len(X)))
    if n_val >= 1 and len(X) - n_val >= 1:
        perm = rng.permutation(len(X))
        X_val, X_tr = X[perm[:n_val]], X[perm[n_val:]]
    else:
        X_val, X_tr = X, X
    params = model.encoder.params() + model.decoder.params()
    opt = nn.AdamW(params, lr=cfg.lr, weight_decay=cfg.weight_decay)
    best_loss = reconstruction_loss(model, X_val)
    best = (model.encoder.copy(), model.decoder.copy())
    history = [best_loss]
    stale = 0
    for _ in range(cfg.max_epochs):
        order = rng.permutation(len(X_tr))
        for start in range(0, len(order), cfg.batch_size):
            _, grads = ae_gradients(model, X_tr[order[start:start + cfg.batch_size]])
            opt.step(grads)
        val = reconstruction_loss(model, X_val)
        history.append(val)
        if val < best_loss:
            best_loss, stale = val, 0
            best = (model.encoder.copy(), model.decoder.copy())
        else:
            stale += 1
            if stale >= cfg.patience:
                break
    out = AeModel(best[0], best[1], cfg.threshold)
    out.history = history
    return out


def latent_probabilities(m: AeModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != m.encoder.in_dim:
        raise DimensionMismatch(f"input length {x.shape[-1]} != {m.encoder.in_dim}")
    z, _ = nn.forward(m.encoder, x)
    return z


def encode_binary(m: AeModel, x) -> np.ndarray:
    """Binarized latent code; a latent exactly at the threshold rounds up to 1."""
    return (latent_probabilities(m, x) >= m.binarize_threshold).astype(np.uint8)


def config_dict(cfg: AeConfig):
    return asdict(cfg)
