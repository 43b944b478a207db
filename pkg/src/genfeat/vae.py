"""LSTM variational autoencoder over embedded documents.

Encoder: LSTM -> ELU dense -> per-position mean and log-variance heads.
Decoder: two LSTMs over the per-position latent codes -> linear projection
back to the embedding width.  Features are the (sampled or mean) codes,
one latent vector per position.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import nn
from .modelio import as_batch, minibatches
from .nn import tensor as T
from .nn.layers import LSTM, Dense

log = logging.getLogger(__name__)


@dataclass
class VaeConfig:
    seq_len: int = 200
    embed_dim: int = 128
    hidden: int = 64
    latent: int = 32
    epochs: int = 100
    batch_size: int = 256
    lr: float = 1e-3
    beta: float = 1.0
    kl_anneal: bool = False


@dataclass
class LatentGaussian:
    mu: object
    logvar: object

    def __post_init__(self):
        if np.shape(self.mu) != np.shape(self.logvar):
            raise ValueError("mu and logvar must have the same shape")


class VaeModel:
    kind = "vae"

    def __init__(self, config: VaeConfig | None = None, seed: int = 0):
        self.config = c = config or VaeConfig()
        self.encoder_layers = [
            LSTM("enc.lstm", c.embed_dim, c.hidden),
            Dense("enc.hidden", c.hidden, c.hidden, "elu"),
        ]
        self.mu_head = Dense("enc.mu", c.hidden, c.latent)
        self.logvar_head = Dense("enc.logvar", c.hidden, c.latent)
        self.decoder_layers = [
            LSTM("dec.lstm1", c.latent, c.hidden),
            LSTM("dec.lstm2", c.hidden, c.hidden),
            Dense("dec.out", c.hidden, c.embed_dim),
        ]
        self.store = nn.ParamStore()
        rng = np.random.default_rng(seed)
        for layer in self.encoder_layers + [self.mu_head, self.logvar_head] + self.decoder_layers:
            layer.init(self.store, rng)
        self.trained = False


def _encode(model: VaeModel, x) -> LatentGaussian:
    h = x
    for layer in model.encoder_layers:
        h = layer(model.store, h)
    return LatentGaussian(model.mu_head(model.store, h), model.logvar_head(model.store, h))


def _decode(model: VaeModel, z):
    h = z
    for layer in model.decoder_layers:
        h = layer(model.store, h)
    return h


def reparameterize(lg: LatentGaussian, eps):
    """z = mu + exp(logvar / 2) * eps (tensors in, tensor out; arrays in, array out)."""
    if np.shape(eps) != np.shape(lg.mu):
        raise ValueError(f"eps shape {np.shape(eps)} does not match latent {np.shape(lg.mu)}")
    if isinstance(lg.mu, T.Tensor) or isinstance(lg.logvar, T.Tensor):
        return lg.mu + T.exp(T.as_tensor(lg.logvar) * 0.5) * eps
    return np.asarray(lg.mu) + np.exp(np.asarray(lg.logvar) / 2) * np.asarray(eps)


def vae_encode(model: VaeModel, x) -> LatentGaussian:
    c = model.config
    batch, single = as_batch(x, c.seq_len, c.embed_dim, "vae_encode")
    lg = _encode(model, batch)
    mu, logvar = lg.mu.data, lg.logvar.data
    return LatentGaussian(mu[0], logvar[0]) if single else LatentGaussian(mu, logvar)


def vae_decode(model: VaeModel, z) -> np.ndarray:
    c = model.config
    batch, single = as_batch(z, c.seq_len, c.latent, "vae_decode")
    out = _decode(model, batch).data
    return out[0] if single else out


def vae_loss(x, reconstruction, lg: LatentGaussian, beta: float = 1.0):
    """MSE reconstruction + beta * KL, with the KL taken per document.

    For a batch [N, T, D] the KL sum is divided by N, so the value equals the
    mean of per-document losses.
    """
    x = T.as_tensor(x)
    docs = x.shape[0] if x.ndim == 3 else 1
    loss = nn.mean_squared_error(reconstruction, x)
    if beta:
        loss = loss + nn.kl_gaussian(lg.mu, lg.logvar) * (beta / docs)
    return loss


def train_vae(model: VaeModel, docs, epochs: int | None = None, batch_size: int | None = None,
              lr: float | None = None, seed: int = 0):
    """Adam training on reconstruction + KL; returns (model, per-epoch mean loss)."""
    c = model.config
    epochs = c.epochs if epochs is None else epochs
    batch_size = c.batch_size if batch_size is None else batch_size
    lr = c.lr if lr is None else lr
    if np.size(docs) == 0:
        raise ValueError("train_vae needs a nonempty corpus")
    docs, _ = as_batch(docs, c.seq_len, c.embed_dim, "train_vae")
    rng = np.random.default_rng(seed)
    anneal_epochs = max(1, int(round(0.1 * epochs)))
    history = []
    for epoch in range(epochs):
        beta = c.beta * min(1.0, epoch / anneal_epochs) if c.kl_anneal else c.beta
        losses, sizes = [], []
        for idx in minibatches(len(docs), batch_size, rng):
            x = docs[idx]
            lg = _encode(model, x)
            z = reparameterize(lg, rng.standard_normal(lg.mu.shape))
            loss = vae_loss(x, _decode(model, z), lg, beta)
            nn.adam_step(model.store, nn.gradients(loss, model.store), lr=lr)
            losses.append(loss.item())
            sizes.append(len(idx))
        history.append(float(np.average(losses, weights=sizes)))
        log.debug("vae epoch %d loss %.6f", epoch + 1, history[-1])
    model.trained = True
    return model, history


def extract_features_vae(model: VaeModel, x, deterministic: bool = True, seed: int | None = None,
                         chunk: int = 256) -> np.ndarray:
    """Per-position latent codes [T, latent] (or [N, T, latent]).

    Deterministic mode returns the posterior mean; otherwise codes are
    sampled with standard-normal noise from ``seed``.
    """
    if not model.trained:
        warnings.warn("extracting features from an untrained VAE", stacklevel=2)
    c = model.config
    batch, single = as_batch(x, c.seq_len, c.embed_dim, "extract_features_vae")
    rng = np.random.default_rng(seed)
    parts = []
    for start in range(0, len(batch), chunk):
        lg = vae_encode(model, batch[start:start + chunk])
        parts.append(lg.mu if deterministic
                     else reparameterize(lg, rng.standard_normal(lg.mu.shape)))
    out = np.concatenate(parts)
    return out[0] if single else out
