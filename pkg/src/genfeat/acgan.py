"""Auxiliary-classifier GAN over embedded documents.

The generator maps (noise, class label) to an embedding-shaped sample; the
discriminator scores realness and predicts the class.  Features come from
the discriminator's second convolution stage.

Generator: z -> dense to [L/4, 384] (LeakyReLU); label -> 50-wide embedding
-> dense to [L/4, 1]; channel concat to 385 maps; two stride-2 transpose
convolutions up to [L, D] with a sigmoid output, emitted as [D, L].

Discriminator: conv 64 -> conv 32 (tap) -> conv 64 /2 + BN -> conv 128 /2
+ BN, each with LeakyReLU and dropout, then a sigmoid realness head and a
softmax class head on the flattened map.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from . import nn
from .modelio import as_batch, minibatches
from .nn import tensor as T
from .nn.layers import INFERENCE, BatchNorm1D, Context, Conv1D, Conv1DTranspose, Dense, Embedding

log = logging.getLogger(__name__)

GAN_BETA1 = 0.5
TAP_STAGE = 1


@dataclass
class GanConfig:
    seq_len: int = 200
    embed_dim: int = 128
    latent: int = 100
    label_dim: int = 50
    base_channels: int = 384
    up_channels: tuple = (64,)
    gen_kernel: int = 4
    disc_filters: tuple = (64, 32, 64, 128)
    disc_kernel: int = 5
    dropout: float = 0.4
    epochs: int = 5000
    batch_size: int = 200
    lr: float = 0.002
    n_classes: int = 7

    def __post_init__(self):
        scale = 2 ** (len(self.up_channels) + 1)
        if self.seq_len % scale:
            raise ValueError(f"seq_len {self.seq_len} must be divisible by {scale}")
        if len(self.disc_filters) != 4:
            raise ValueError("the discriminator has exactly four conv stages")

    @property
    def base_len(self) -> int:
        return self.seq_len // 2 ** (len(self.up_channels) + 1)


class GeneratorModel:
    kind = "acgan-generator"

    def __init__(self, config: GanConfig | None = None, seed: int = 0):
        self.config = c = config or GanConfig()
        self.project = Dense("gen.project", c.latent, c.base_len * c.base_channels,
                             "leaky_relu", init="normal")
        self.label_embed = Embedding("gen.label", c.n_classes, c.label_dim, init="normal")
        self.label_project = Dense("gen.label_project", c.label_dim, c.base_len, init="normal")
        widths = (c.base_channels + 1,) + tuple(c.up_channels) + (c.embed_dim,)
        self.ups = [
            Conv1DTranspose(f"gen.up{i}", widths[i], widths[i + 1], c.gen_kernel, stride=2,
                            activation="sigmoid" if i == len(widths) - 2 else "leaky_relu",
                            init="normal")
            for i in range(len(widths) - 1)
        ]
        self.store = nn.ParamStore()
        rng = np.random.default_rng(seed)
        for layer in [self.project, self.label_embed, self.label_project] + self.ups:
            layer.init(self.store, rng)
        self.trained = False


class DiscriminatorModel:
    kind = "acgan-discriminator"

    def __init__(self, config: GanConfig | None = None, seed: int = 0):
        self.config = c = config or GanConfig()
        strides = (1, 1, 2, 2)
        widths = (c.embed_dim,) + tuple(c.disc_filters)
        self.convs = [Conv1D(f"disc.conv{i}", widths[i], widths[i + 1], c.disc_kernel,
                             stride=strides[i], init="normal") for i in range(4)]
        self.norms = {i: BatchNorm1D(f"disc.bn{i}", widths[i + 1]) for i in (2, 3)}
        length = c.seq_len
        for s in strides:
            length = -(-length // s)
        self.flat_dim = length * widths[-1]
        self.realness = Dense("disc.realness", self.flat_dim, 1, "sigmoid", init="normal")
        self.classes = Dense("disc.classes", self.flat_dim, c.n_classes, "softmax",
                             init="normal")
        self.store = nn.ParamStore()
        rng = np.random.default_rng(seed)
        for layer in self.convs + list(self.norms.values()) + [self.realness, self.classes]:
            layer.init(self.store, rng)
        self.trained = False


def _check_labels(labels, n_classes: int) -> np.ndarray:
    labels = np.atleast_1d(np.asarray(labels))
    if not np.issubdtype(labels.dtype, np.integer):
        raise ValueError("class labels must be integers")
    if labels.size and (labels.min() < 0 or labels.max() >= n_classes):
        raise ValueError(f"class labels must lie in [0, {n_classes})")
    return labels


def _generate(g: GeneratorModel, z, labels):
    """[N, L, D] samples (positions first) as a tensor."""
    c = g.config
    n = len(labels)
    h = g.project(g.store, z).reshape(n, c.base_len, c.base_channels)
    lab = g.label_project(g.store, g.label_embed(g.store, labels)).reshape(n, c.base_len, 1)
    h = T.concat([h, lab], axis=-1)
    for up in g.ups:
        h = up(g.store, h)
    return h


def _discriminate(d: DiscriminatorModel, x, ctx: Context = INFERENCE):
    """(realness [N, 1], class probabilities [N, K], tap [N, L, 32])."""
    c = d.config
    h = T.as_tensor(x)
    tap = None
    for i, conv in enumerate(d.convs):
        h = conv(d.store, h)
        if i in d.norms:
            h = d.norms[i](d.store, h, ctx)
        h = T.leaky_relu(h)
        if i == TAP_STAGE:
            tap = h
        h = nn.dropout(h, c.dropout, ctx)
    flat = h.reshape(h.shape[0], d.flat_dim)
    return d.realness(d.store, flat), d.classes(d.store, flat), tap


def generator_forward(g: GeneratorModel, z, label) -> np.ndarray:
    """Generated embedding [D, L] for one (z, label), or [N, D, L] for a batch."""
    c = g.config
    z = np.asarray(z, dtype=float)
    single = z.ndim == 1
    labels = _check_labels(label, c.n_classes)
    z = z[None] if single else z
    if z.shape != (len(labels), c.latent):
        raise ValueError(f"expected {len(labels)} latent vectors of width {c.latent}, got {z.shape}")
    out = np.swapaxes(_generate(g, z, labels).data, 1, 2)
    return out[0] if single else out


def discriminator_forward(d: DiscriminatorModel, x):
    """(realness, class probabilities) in inference mode."""
    c = d.config
    batch, single = as_batch(x, c.seq_len, c.embed_dim, "discriminator_forward")
    real, cls, _ = _discriminate(d, batch)
    real, cls = real.data[:, 0], cls.data
    return (float(real[0]), cls[0]) if single else (real, cls)


def discriminator_tap(d: DiscriminatorModel, x) -> np.ndarray:
    """Second conv stage output, channels first: [32, L] (or [N, 32, L])."""
    c = d.config
    batch, single = as_batch(x, c.seq_len, c.embed_dim, "discriminator_tap")
    tap = np.swapaxes(_discriminate(d, batch)[2].data, 1, 2)
    expected = (c.disc_filters[TAP_STAGE], c.seq_len)
    if tap.shape[1:] != expected:
        raise ValueError(f"discriminator tap has shape {tap.shape[1:]}, expected {expected}")
    return tap[0] if single else tap


def discriminator_loss(realness, classes, real_targets, class_targets, class_weights=None):
    """BCE on realness plus weighted CCE on the class head."""
    return (nn.binary_cross_entropy(realness, real_targets)
            + nn.categorical_cross_entropy(classes, class_targets, class_weights))


def _one_hot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def discriminator_step(g, d, real_docs, real_labels, rng, class_weights=None, lr=None):
    """Update the discriminator on real docs plus as many generated ones.

    Returns (loss, mean realness assigned to the real docs).
    """
    c = d.config
    lr = c.lr if lr is None else lr
    n = len(real_docs)
    fake_labels = rng.integers(0, c.n_classes, size=n)
    fake = _generate(g, rng.standard_normal((n, g.config.latent)), fake_labels).data
    x = np.concatenate([real_docs, fake])
    labels = np.concatenate([real_labels, fake_labels])
    ctx = Context(training=True, rng=rng)
    realness, classes, _ = _discriminate(d, x, ctx)
    targets = np.concatenate([np.ones(n), np.zeros(n)])[:, None]
    loss = discriminator_loss(realness, classes, targets, _one_hot(labels, c.n_classes),
                              class_weights)
    nn.adam_step(d.store, nn.gradients(loss, d.store), lr=lr, beta1=GAN_BETA1)
    nn.apply_updates(d.store, ctx)
    return loss.item(), float(realness.data[:n].mean())


def composite_step(g, d, n, rng, class_weights=None, lr=None):
    """Generator update through the frozen discriminator.

    The discriminator runs in training mode (dropout on, batch statistics)
    but neither its weights nor its running statistics change.
    """
    c = g.config
    lr = c.lr if lr is None else lr
    labels = rng.integers(0, c.n_classes, size=n)
    fake = _generate(g, rng.standard_normal((n, c.latent)), labels)
    ctx = Context(training=True, rng=rng, update_stats=False)
    realness, classes, _ = _discriminate(d, fake, ctx)
    loss = discriminator_loss(realness, classes, np.ones((n, 1)),
                              _one_hot(labels, c.n_classes), class_weights)
    nn.adam_step(g.store, nn.gradients(loss, g.store), lr=lr, beta1=GAN_BETA1)
    return loss.item()


def train_acgan(g: GeneratorModel, d: DiscriminatorModel, docs, labels, class_weights=None,
                epochs: int | None = None, batch_size: int | None = None,
                lr: float | None = None, seed: int = 0, callback=None):
    """Alternate discriminator and composite steps; returns (g, d, history).

    Each step takes ``batch_size // 2`` real documents and as many generated
    ones.  ``history`` has per-step ``discriminator`` and ``generator`` losses
    and per-epoch ``real_realness``.  ``callback(phase, g, d)`` runs after
    every step.
    """
    c = d.config
    epochs = c.epochs if epochs is None else epochs
    batch_size = c.batch_size if batch_size is None else batch_size
    if np.size(docs) == 0:
        raise ValueError("train_acgan needs a nonempty labeled corpus")
    docs, _ = as_batch(docs, c.seq_len, c.embed_dim, "train_acgan")
    labels = _check_labels(labels, c.n_classes)
    if len(labels) != len(docs):
        raise ValueError("one label per document required")
    half = max(1, batch_size // 2)
    rng = np.random.default_rng(seed)
    history = {"discriminator": [], "generator": [], "real_realness": []}
    for epoch in range(epochs):
        realness, sizes = [], []
        for idx in minibatches(len(docs), half, rng):
            loss, real_score = discriminator_step(g, d, docs[idx], labels[idx], rng,
                                                  class_weights, lr)
            history["discriminator"].append(loss)
            realness.append(real_score)
            sizes.append(len(idx))
            if callback is not None:
                callback("discriminator", g, d)
            history["generator"].append(composite_step(g, d, 2 * len(idx), rng,
                                                       class_weights, lr))
            if callback is not None:
                callback("generator", g, d)
        history["real_realness"].append(float(np.average(realness, weights=sizes)))
        log.debug("acgan epoch %d real realness %.4f", epoch + 1, history["real_realness"][-1])
    g.trained = d.trained = True
    return g, d, history


def extract_features_acgan(d: DiscriminatorModel, x, chunk: int = 256) -> np.ndarray:
    """Second-conv tap transposed to [L, 32] per document."""
    if not d.trained:
        warnings.warn("extracting features from an untrained discriminator", stacklevel=2)
    c = d.config
    batch, single = as_batch(x, c.seq_len, c.embed_dim, "extract_features_acgan")
    out = np.concatenate([np.swapaxes(discriminator_tap(d, batch[s:s + chunk]), 1, 2)
                          for s in range(0, len(batch), chunk)])
    return out[0] if single else out
