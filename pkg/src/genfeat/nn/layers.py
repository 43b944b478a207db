"""Layer catalog shared by the extractors and classifiers.

Sequence tensors are laid out [N, T, C] (batch, positions, channels).  Each
layer owns a name prefix; its parameters live in a :class:`ParamStore`
under ``"<prefix>.<param>"`` and are read at call time, so one layer object
can be applied with any compatible store.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .params import ParamStore
from .tensor import Tensor

MAX_KERNEL = 7
LEAKY_SLOPE = 0.2
ELU_ALPHA = 1.0
GAN_INIT_STD = 0.02

KINDS = (
    "dense", "embedding-lookup", "lstm", "bidirectional-lstm", "conv1d",
    "conv1d-transpose", "max-pool1d", "global-avg-pool1d", "batch-norm1d",
    "dropout", "multi-head-attention", "repeat-vector",
)
ACTIVATIONS = ("linear", "relu", "elu", "leaky_relu", "sigmoid", "tanh", "softmax")


@dataclass
class LayerSpec:
    kind: str
    units: int = 0
    kernel: int = 1
    stride: int = 1
    pool: int = 2
    heads: int = 1
    rate: float = 0.0
    activation: str = "linear"
    repeat: int = 1
    init: str = "glorot"
    return_sequences: bool = True

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")
        if self.stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {self.stride}")
        if not 0.0 <= self.rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {self.rate}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.kind in ("conv1d", "conv1d-transpose") and not 1 <= self.kernel <= MAX_KERNEL:
            raise ValueError(f"kernel width must be in [1, {MAX_KERNEL}], got {self.kernel}")
        if self.kind == "multi-head-attention" and (self.heads < 1 or self.units % self.heads):
            raise ValueError(f"{self.heads} heads do not divide model width {self.units}")


class Context:
    """Per-call mode: training flag, RNG for dropout, collected buffer updates."""

    def __init__(self, training: bool = False, rng: np.random.Generator | None = None,
                 update_stats: bool = True):
        self.training = training
        self.rng = rng
        self.update_stats = update_stats
        self.updates: dict = {}
        self.taps: dict = {}


INFERENCE = Context()


def activate(x: Tensor, name: str) -> Tensor:
    if name == "linear":
        return x
    if name == "relu":
        return T.relu(x)
    if name == "elu":
        return T.elu(x, ELU_ALPHA)
    if name == "leaky_relu":
        return T.leaky_relu(x, LEAKY_SLOPE)
    if name == "sigmoid":
        return T.sigmoid(x)
    if name == "tanh":
        return T.tanh(x)
    if name == "softmax":
        return T.softmax(x, axis=-1)
    raise ValueError(f"unknown activation {name!r}")


def glorot_uniform(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _weight(rng, init, shape, fan_in, fan_out):
    if init == "normal":
        return rng.normal(0.0, GAN_INIT_STD, size=shape)
    if init == "zeros":
        return np.zeros(shape)
    return glorot_uniform(rng, shape, fan_in, fan_out)


class Layer:
    name = ""

    def init(self, store: ParamStore, rng: np.random.Generator) -> None:
        pass

    def __call__(self, store, x, ctx=INFERENCE):
        raise NotImplementedError


class Dense(Layer):
    def __init__(self, name, in_dim, units, activation="linear", init="glorot"):
        self.name, self.in_dim, self.units = name, in_dim, units
        self.activation, self.init_kind = activation, init

    def init(self, store, rng):
        store.add(f"{self.name}.W", _weight(rng, self.init_kind, (self.in_dim, self.units),
                                             self.in_dim, self.units))
        store.add(f"{self.name}.b", np.zeros(self.units))

    def __call__(self, store, x, ctx=INFERENCE):
        x = T.as_tensor(x)
        if x.shape[-1] != self.in_dim:
            raise ValueError(f"{self.name}: expected width {self.in_dim}, got {x.shape[-1]}")
        return activate(x @ store[f"{self.name}.W"] + store[f"{self.name}.b"], self.activation)


class Embedding(Layer):
    def __init__(self, name, vocab, dim, init="glorot"):
        self.name, self.vocab, self.dim, self.init_kind = name, vocab, dim, init

    def init(self, store, rng):
        store.add(f"{self.name}.table",
                  _weight(rng, self.init_kind, (self.vocab, self.dim), self.vocab, self.dim))

    def __call__(self, store, indices, ctx=INFERENCE):
        return T.embedding(store[f"{self.name}.table"], indices)


class LSTM(Layer):
    """Unidirectional LSTM; returns [N, T, U] or the final state [N, U]."""

    def __init__(self, name, in_dim, units, return_sequences=True, reverse=False):
        self.name, self.in_dim, self.units = name, in_dim, units
        self.return_sequences, self.reverse = return_sequences, reverse

    def init(self, store, rng):
        u = self.units
        store.add(f"{self.name}.W", glorot_uniform(rng, (self.in_dim, 4 * u), self.in_dim, 4 * u))
        store.add(f"{self.name}.R", glorot_uniform(rng, (u, 4 * u), u, 4 * u))
        bias = np.zeros(4 * u)
        bias[u:2 * u] = 1.0
        store.add(f"{self.name}.b", bias)

    def __call__(self, store, x, ctx=INFERENCE):
        p = self.name
        h = T.lstm(x, store[f"{p}.W"], store[f"{p}.R"], store[f"{p}.b"], reverse=self.reverse)
        if self.return_sequences:
            return h
        return h[:, 0] if self.reverse else h[:, -1]


class BiLSTM(Layer):
    """Forward and backward LSTMs concatenated to width 2U.

    The final-state form joins the forward state at the last position with
    the backward state at the first position.
    """

    def __init__(self, name, in_dim, units, return_sequences=True):
        self.name, self.units, self.return_sequences = name, units, return_sequences
        self.fwd = LSTM(f"{name}.fwd", in_dim, units)
        self.bwd = LSTM(f"{name}.bwd", in_dim, units, reverse=True)

    def init(self, store, rng):
        self.fwd.init(store, rng)
        self.bwd.init(store, rng)

    def __call__(self, store, x, ctx=INFERENCE):
        hf, hb = self.fwd(store, x), self.bwd(store, x)
        if self.return_sequences:
            return T.concat([hf, hb], axis=-1)
        return T.concat([hf[:, -1], hb[:, 0]], axis=-1)


class Conv1D(Layer):
    def __init__(self, name, in_ch, filters, kernel, stride=1, activation="linear", init="glorot"):
        if not 1 <= kernel <= MAX_KERNEL:
            raise ValueError(f"kernel width {kernel} exceeds maximum {MAX_KERNEL}")
        if stride not in (1, 2):
            raise ValueError(f"stride must be 1 or 2, got {stride}")
        self.name, self.in_ch, self.filters = name, in_ch, filters
        self.kernel, self.stride, self.activation, self.init_kind = kernel, stride, activation, init

    def init(self, store, rng):
        shape = (self.kernel, self.in_ch, self.filters)
        store.add(f"{self.name}.W", _weight(rng, self.init_kind, shape,
                                             self.kernel * self.in_ch, self.kernel * self.filters))
        store.add(f"{self.name}.b", np.zeros(self.filters))

    def __call__(self, store, x, ctx=INFERENCE):
        out = T.conv1d(x, store[f"{self.name}.W"], store[f"{self.name}.b"], self.stride)
        return activate(out, self.activation)


class Conv1DTranspose(Layer):
    def __init__(self, name, in_ch, filters, kernel, stride=2, activation="linear", init="glorot"):
        if not 1 <= kernel <= MAX_KERNEL:
            raise ValueError(f"kernel width {kernel} exceeds maximum {MAX_KERNEL}")
        self.name, self.in_ch, self.filters = name, in_ch, filters
        self.kernel, self.stride, self.activation, self.init_kind = kernel, stride, activation, init

    def init(self, store, rng):
        shape = (self.kernel, self.filters, self.in_ch)
        store.add(f"{self.name}.W", _weight(rng, self.init_kind, shape,
                                             self.kernel * self.in_ch, self.kernel * self.filters))
        store.add(f"{self.name}.b", np.zeros(self.filters))

    def __call__(self, store, x, ctx=INFERENCE):
        out = T.conv1d_transpose(x, store[f"{self.name}.W"], store[f"{self.name}.b"], self.stride)
        return activate(out, self.activation)


class MaxPool1D(Layer):
    def __init__(self, pool=2):
        self.pool = pool

    def __call__(self, store, x, ctx=INFERENCE):
        return T.max_pool1d(x, self.pool)


class GlobalAvgPool1D(Layer):
    def __call__(self, store, x, ctx=INFERENCE):
        return T.as_tensor(x).mean(axis=-2)


class BatchNorm1D(Layer):
    """Per-channel batch normalization over the batch and position axes.

    Training mode normalizes with batch statistics and, when the context asks
    for it, records updated running statistics in ``ctx.updates``; inference
    uses the running statistics.
    """

    def __init__(self, name, channels, momentum=0.99, eps=1e-3):
        self.name, self.channels, self.momentum, self.eps = name, channels, momentum, eps

    def init(self, store, rng):
        store.add(f"{self.name}.gamma", np.ones(self.channels))
        store.add(f"{self.name}.beta", np.zeros(self.channels))
        store.add_buffer(f"{self.name}.mean", np.zeros(self.channels))
        store.add_buffer(f"{self.name}.var", np.ones(self.channels))

    def __call__(self, store, x, ctx=INFERENCE):
        x = T.as_tensor(x)
        gamma, beta = store[f"{self.name}.gamma"], store[f"{self.name}.beta"]
        axes = tuple(range(x.ndim - 1))
        if ctx.training:
            if x.shape[0] < 2:
                raise ValueError("batch normalization in training mode needs at least 2 samples")
            mu = x.mean(axis=axes, keepdims=True)
            centered = x - mu
            var = (centered * centered).mean(axis=axes, keepdims=True)
            if ctx.update_stats:
                m = self.momentum
                key_mean, key_var = f"{self.name}.mean", f"{self.name}.var"
                ctx.updates[key_mean] = m * store.buffers[key_mean] + (1 - m) * mu.data.reshape(-1)
                ctx.updates[key_var] = m * store.buffers[key_var] + (1 - m) * var.data.reshape(-1)
            xhat = centered * (var + self.eps) ** -0.5
        else:
            mu = store.buffers[f"{self.name}.mean"]
            var = store.buffers[f"{self.name}.var"]
            xhat = (x - mu) * (1.0 / np.sqrt(var + self.eps))
        return xhat * gamma + beta


def dropout(x, rate: float, ctx: Context = INFERENCE) -> Tensor:
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = T.as_tensor(x)
    if not ctx.training or rate == 0.0:
        return x
    if ctx.rng is None:
        raise ValueError("training-mode dropout needs an RNG in the context")
    keep = (ctx.rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep


class Dropout(Layer):
    def __init__(self, rate):
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate

    def __call__(self, store, x, ctx=INFERENCE):
        return dropout(x, self.rate, ctx)


class MultiHeadAttention(Layer):
    """Scaled dot-product self-attention with ``heads`` heads over [N, T, D]."""

    def __init__(self, name, dim, heads):
        if heads < 1 or dim % heads:
            raise ValueError(f"{heads} heads do not divide model width {dim}")
        self.name, self.dim, self.heads = name, dim, heads

    def init(self, store, rng):
        for part in ("q", "k", "v", "o"):
            store.add(f"{self.name}.W{part}", glorot_uniform(rng, (self.dim, self.dim),
                                                             self.dim, self.dim))
            store.add(f"{self.name}.b{part}", np.zeros(self.dim))

    def _split(self, t: Tensor) -> Tensor:
        n, steps, _ = t.shape
        return t.reshape(n, steps, self.heads, self.dim // self.heads).transpose(0, 2, 1, 3)

    def weights_and_output(self, store, x):
        x = T.as_tensor(x)
        p = self.name
        proj = {part: x @ store[f"{p}.W{part}"] + store[f"{p}.b{part}"] for part in "qkv"}
        q, k, v = (self._split(proj[part]) for part in "qkv")
        scores = (q @ T.swap_last(k)) * (1.0 / np.sqrt(self.dim // self.heads))
        attn = T.softmax(scores, axis=-1)
        ctx_vec = (attn @ v).transpose(0, 2, 1, 3).reshape(x.shape)
        return attn, ctx_vec @ store[f"{p}.Wo"] + store[f"{p}.bo"]

    def __call__(self, store, x, ctx=INFERENCE):
        return self.weights_and_output(store, x)[1]


class RepeatVector(Layer):
    """[N, D] -> [N, n, D]."""

    def __init__(self, n):
        self.n = n

    def __call__(self, store, x, ctx=INFERENCE):
        x = T.as_tensor(x)
        return T.broadcast_to(x.reshape(x.shape[0], 1, x.shape[1]), (x.shape[0], self.n, x.shape[1]))


def make_layer(spec: LayerSpec, in_dim: int, name: str) -> Layer:
    """Instantiate a catalog layer from its spec and input width."""
    spec.validate()
    kind = spec.kind
    if kind == "dense":
        return Dense(name, in_dim, spec.units, spec.activation, spec.init)
    if kind == "embedding-lookup":
        return Embedding(name, in_dim, spec.units, spec.init)
    if kind == "lstm":
        return LSTM(name, in_dim, spec.units, spec.return_sequences)
    if kind == "bidirectional-lstm":
        return BiLSTM(name, in_dim, spec.units, spec.return_sequences)
    if kind == "conv1d":
        return Conv1D(name, in_dim, spec.units, spec.kernel, spec.stride, spec.activation, spec.init)
    if kind == "conv1d-transpose":
        return Conv1DTranspose(name, in_dim, spec.units, spec.kernel, spec.stride,
                               spec.activation, spec.init)
    if kind == "max-pool1d":
        return MaxPool1D(spec.pool)
    if kind == "global-avg-pool1d":
        return GlobalAvgPool1D()
    if kind == "batch-norm1d":
        return BatchNorm1D(name, in_dim)
    if kind == "dropout":
        return Dropout(spec.rate)
    if kind == "multi-head-attention":
        if in_dim % spec.heads:
            raise ValueError(f"{spec.heads} heads do not divide model width {in_dim}")
        return MultiHeadAttention(name, in_dim, spec.heads)
    return RepeatVector(spec.repeat)


def apply_updates(store: ParamStore, ctx: Context) -> None:
    """Commit running-statistic updates gathered during a training forward pass."""
    for key, value in ctx.updates.items():
        store.buffers[key] = value
    ctx.updates = {}
