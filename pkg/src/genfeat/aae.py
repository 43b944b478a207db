"""Adversarial autoencoder with a per-position latent discriminator.

Each batch runs three phases:

1. discriminator: encoder codes labeled fake (0) against standard-normal
   draws labeled real (1), binary cross-entropy, discriminator weights only;
2. autoencoder: encoder + decoder on reconstruction MSE;
3. encoder: discriminator frozen, encoder pushed to make codes look real.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import nn
from .modelio import as_batch, minibatches
from .nn.layers import LSTM, Dense
from .vae import LatentGaussian, reparameterize

log = logging.getLogger(__name__)

GAN_BETA1 = 0.5


@dataclass
class AaeConfig:
    seq_len: int = 200
    embed_dim: int = 128
    hidden: int = 64
    latent: int = 32
    disc_hidden: tuple = (64, 32)
    epochs: int = 5000
    batch_size: int = 200
    fake_count: int = 100
    real_count: int = 100
    lr: float = 0.002

    def __post_init__(self):
        if self.fake_count + self.real_count > self.batch_size:
            raise ValueError("fake_count + real_count must not exceed batch_size")
        if min(self.fake_count, self.real_count) < 1:
            raise ValueError("discriminator sample counts must be positive")


class AaeModel:
    kind = "aae"

    def __init__(self, config: AaeConfig | None = None, seed: int = 0):
        self.config = c = config or AaeConfig()
        self.encoder_layers = [
            LSTM("enc.lstm1", c.embed_dim, c.hidden),
            LSTM("enc.lstm2", c.hidden, c.hidden),
            Dense("enc.hidden", c.hidden, c.hidden, "leaky_relu"),
        ]
        self.mu_head = Dense("enc.mu", c.hidden, c.latent)
        self.logvar_head = Dense("enc.logvar", c.hidden, c.latent)
        self.decoder_layers = [
            LSTM("dec.lstm1", c.latent, c.hidden),
            LSTM("dec.lstm2", c.hidden, c.hidden),
            Dense("dec.hidden", c.hidden, c.hidden, "leaky_relu"),
            Dense("dec.out", c.hidden, c.embed_dim, "sigmoid"),
        ]
        widths = (c.latent,) + tuple(c.disc_hidden)
        self.disc_layers = [Dense(f"disc.h{i}", widths[i], widths[i + 1], "leaky_relu")
                            for i in range(len(c.disc_hidden))]
        self.disc_layers.append(Dense("disc.out", widths[-1], 1, "sigmoid"))
        self.store = nn.ParamStore()
        rng = np.random.default_rng(seed)
        for layer in (self.encoder_layers + [self.mu_head, self.logvar_head]
                      + self.decoder_layers + self.disc_layers):
            layer.init(self.store, rng)
        self.trained = False

    @property
    def encoder_params(self):
        return self.store.names("enc.")

    @property
    def decoder_params(self):
        return self.store.names("dec.")

    @property
    def discriminator_params(self):
        return self.store.names("disc.")


def _posterior(model, x) -> LatentGaussian:
    h = x
    for layer in model.encoder_layers:
        h = layer(model.store, h)
    return LatentGaussian(model.mu_head(model.store, h), model.logvar_head(model.store, h))


def _decode(model, codes):
    h = codes
    for layer in model.decoder_layers:
        h = layer(model.store, h)
    return h


def _discriminate(model, codes):
    h = codes
    for layer in model.disc_layers:
        h = layer(model.store, h)
    return h


def aae_encode(model: AaeModel, x, eps=None, deterministic: bool = False,
               seed: int | None = None) -> np.ndarray:
    """Sampled latent codes [T, latent]; ``eps`` overrides the seeded noise."""
    c = model.config
    batch, single = as_batch(x, c.seq_len, c.embed_dim, "aae_encode")
    lg = _posterior(model, batch)
    if deterministic:
        codes = lg.mu.data
    else:
        if eps is None:
            eps = np.random.default_rng(seed).standard_normal(lg.mu.shape)
        eps = np.asarray(eps, float).reshape(lg.mu.shape)
        codes = reparameterize(LatentGaussian(lg.mu.data, lg.logvar.data), eps)
    return codes[0] if single else codes


def aae_decode(model: AaeModel, codes) -> np.ndarray:
    c = model.config
    batch, single = as_batch(codes, c.seq_len, c.latent, "aae_decode")
    out = _decode(model, batch).data
    return out[0] if single else out


def aae_discriminate(model: AaeModel, codes) -> np.ndarray:
    """Validity in (0, 1) for each latent vector of ``codes`` [n, latent]."""
    codes = np.asarray(codes, dtype=float)
    if codes.ndim != 2 or codes.shape[1] != model.config.latent:
        raise ValueError(f"expected [n, {model.config.latent}] codes, got {codes.shape}")
    return _discriminate(model, codes).data[:, 0]


# ---------------------------------------------------------------------------
# training phases


def phase_discriminator(model: AaeModel, x: np.ndarray, rng: np.random.Generator) -> float:
    c = model.config
    fake_docs = x[:c.fake_count]
    lg = _posterior(model, fake_docs)
    fake = reparameterize(LatentGaussian(lg.mu.data, lg.logvar.data),
                          rng.standard_normal(lg.mu.shape)).reshape(-1, c.latent)
    real = rng.standard_normal((c.real_count * c.seq_len, c.latent))
    codes = np.concatenate([fake, real])
    target = np.concatenate([np.zeros(len(fake)), np.ones(len(real))])[:, None]
    loss = nn.binary_cross_entropy(_discriminate(model, codes), target)
    names = model.discriminator_params
    nn.adam_step(model.store, nn.gradients(loss, model.store, names),
                 lr=c.lr, beta1=GAN_BETA1, slot="disc")
    return loss.item()


def phase_autoencoder(model: AaeModel, x: np.ndarray, rng: np.random.Generator) -> float:
    c = model.config
    lg = _posterior(model, x)
    codes = reparameterize(lg, rng.standard_normal(lg.mu.shape))
    loss = nn.mean_squared_error(_decode(model, codes), x)
    names = model.encoder_params + model.decoder_params
    nn.adam_step(model.store, nn.gradients(loss, model.store, names), lr=c.lr, slot="ae")
    return loss.item()


def phase_encoder(model: AaeModel, x: np.ndarray, rng: np.random.Generator) -> float:
    c = model.config
    lg = _posterior(model, x)
    codes = reparameterize(lg, rng.standard_normal(lg.mu.shape)).reshape(-1, c.latent)
    validity = _discriminate(model, codes)
    loss = nn.binary_cross_entropy(validity, np.ones(validity.shape))
    names = model.encoder_params
    nn.adam_step(model.store, nn.gradients(loss, model.store, names),
                 lr=c.lr, beta1=GAN_BETA1, slot="gen")
    return loss.item()


def train_aae(model: AaeModel, docs, config: AaeConfig | None = None, seed: int = 0,
              callback=None):
    """Run the three-phase schedule; returns (model, history).

    ``history`` holds per-batch losses under ``discriminator``,
    ``reconstruction`` and ``encoder`` plus per-epoch mean reconstruction
    under ``epoch_reconstruction``.  ``callback(phase, model)`` runs after
    every phase of every batch.
    """
    c = config or model.config
    if np.size(docs) == 0:
        raise ValueError("train_aae needs a nonempty corpus")
    docs, _ = as_batch(docs, c.seq_len, c.embed_dim, "train_aae")
    if min(c.batch_size, len(docs)) < max(c.fake_count, c.real_count):
        raise ValueError(f"batch of {min(c.batch_size, len(docs))} documents is smaller than "
                         f"the discriminator sample counts {c.fake_count}/{c.real_count}")
    saved, model.config = model.config, c
    rng = np.random.default_rng(seed)
    history = {"discriminator": [], "reconstruction": [], "encoder": [],
               "epoch_reconstruction": []}
    try:
        for epoch in range(c.epochs):
            recon, sizes = [], []
            for idx in minibatches(len(docs), c.batch_size, rng):
                x = docs[idx]
                for phase, fn in (("discriminator", phase_discriminator),
                                  ("reconstruction", phase_autoencoder),
                                  ("encoder", phase_encoder)):
                    history[phase].append(fn(model, x, rng))
                    if callback is not None:
                        callback(phase, model)
                recon.append(history["reconstruction"][-1])
                sizes.append(len(idx))
            history["epoch_reconstruction"].append(float(np.average(recon, weights=sizes)))
            log.debug("aae epoch %d reconstruction %.6f", epoch + 1,
                      history["epoch_reconstruction"][-1])
    finally:
        model.config = saved
    model.trained = True
    return model, history


def extract_features_aae(model: AaeModel, x, deterministic: bool = True,
                         seed: int | None = None, chunk: int = 256) -> np.ndarray:
    if not model.trained:
        warnings.warn("extracting features from an untrained AAE", stacklevel=2)
    c = model.config
    batch, single = as_batch(x, c.seq_len, c.embed_dim, "extract_features_aae")
    rng = np.random.default_rng(seed)
    parts = []
    for start in range(0, len(batch), chunk):
        part = batch[start:start + chunk]
        eps = None if deterministic else rng.standard_normal((len(part), c.seq_len, c.latent))
        parts.append(aae_encode(model, part, eps=eps, deterministic=deterministic))
    out = np.concatenate(parts)
    return out[0] if single else out
