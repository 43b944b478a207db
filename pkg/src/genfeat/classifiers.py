"""Benchmark document classifiers over [positions, features] inputs.

Kinds:

* ``lstm``: stacked LSTMs, the last returning its final state;
* ``bilstm``: stacked bidirectional LSTMs, final states concatenated;
* ``bilstm-attention``: stacked BiLSTMs, multi-head self-attention, average pool;
* ``cnn``: four conv + max-pool stages, then global average pooling;
* ``clstm``: three conv + max-pool stages whose pooled frames feed an LSTM stack.

Inputs are z-scored per (position, feature) with training-set statistics
before the first layer.  Every kind ends in dropout and a softmax layer
over the classes.  Training
minimizes class-weighted cross-entropy with Adam and keeps the epoch with
the best macro validation recall.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .modelio import minibatches
from .nn.layers import (
    INFERENCE, LSTM, BiLSTM, Context, Conv1D, Dense, Dropout, GlobalAvgPool1D, MaxPool1D,
    MultiHeadAttention,
)
from .stats import confusion_matrix, macro_prf

log = logging.getLogger(__name__)

KINDS = ("lstm", "bilstm", "bilstm-attention", "cnn", "clstm")
RECURRENT = ("lstm", "bilstm", "bilstm-attention")
LAYER_RANGE = (4, 8)
UNIT_RANGE = (32, 256)
MAX_FILTERS = 512
MAX_KERNEL = 7
CONV_FILTERS = (128, 128, 256, 256)
CONV_KERNELS = (5, 5, 3, 3)
STD_FLOOR = 1e-3


@dataclass
class ClassifierSpec:
    kind: str = "cnn"
    seq_len: int = 200
    n_features: int = 32
    n_classes: int = 7
    n_layers: int = 4
    units: int = 64
    heads: int = 4
    filters: tuple | None = None
    kernels: tuple | None = None
    lstm_units: tuple = (128, 128, 64, 64)
    dropout: float = 0.4
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 50
    patience: int = 10
    standardize: bool = True

    def __post_init__(self):
        stages = 3 if self.kind == "clstm" else 4
        if self.filters is None:
            self.filters = CONV_FILTERS[:stages]
        if self.kernels is None:
            self.kernels = CONV_KERNELS[:stages]
        self.filters, self.kernels = tuple(self.filters), tuple(self.kernels)
        self.lstm_units = tuple(self.lstm_units)
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown classifier kind {self.kind!r}; choose from {KINDS}")
        if self.n_classes < 2:
            raise ValueError("need at least two classes")
        lo, hi = UNIT_RANGE
        if self.kind in RECURRENT:
            if not LAYER_RANGE[0] <= self.n_layers <= LAYER_RANGE[1]:
                raise ValueError(f"hidden layer count must lie in {LAYER_RANGE}, got {self.n_layers}")
            if not lo <= self.units <= hi:
                raise ValueError(f"units per layer must lie in {UNIT_RANGE}, got {self.units}")
        if self.kind == "bilstm-attention" and (self.heads < 1 or (2 * self.units) % self.heads):
            raise ValueError(f"{self.heads} heads do not divide attention width {2 * self.units}")
        if self.kind in ("cnn", "clstm"):
            stages = 4 if self.kind == "cnn" else 3
            if len(self.filters) != stages or len(self.kernels) != stages:
                raise ValueError(f"{self.kind} needs {stages} filter counts and kernel widths")
            if any(not 1 <= f <= MAX_FILTERS for f in self.filters):
                raise ValueError(f"conv filters must lie in [1, {MAX_FILTERS}]")
            if any(not 1 <= k <= MAX_KERNEL for k in self.kernels):
                raise ValueError(f"kernel widths must lie in [1, {MAX_KERNEL}]")
        if self.kind == "clstm":
            if not LAYER_RANGE[0] <= len(self.lstm_units) <= LAYER_RANGE[1]:
                raise ValueError(f"C-LSTM needs {LAYER_RANGE} LSTM layers")
            if any(not lo <= u <= hi for u in self.lstm_units):
                raise ValueError(f"LSTM widths must lie in {UNIT_RANGE}")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("dropout must lie in [0, 1)")


class ClassifierModel:
    kind = "classifier"

    def __init__(self, spec: ClassifierSpec | None = None, seed: int = 0):
        self.config = s = spec or ClassifierSpec()
        self.layers = []
        width = s.n_features
        if s.kind == "lstm":
            for i in range(s.n_layers):
                last = i == s.n_layers - 1
                self.layers.append(LSTM(f"clf.lstm{i}", width, s.units, return_sequences=not last))
                width = s.units
        elif s.kind in ("bilstm", "bilstm-attention"):
            attention = s.kind == "bilstm-attention"
            for i in range(s.n_layers):
                seq = attention or i < s.n_layers - 1
                self.layers.append(BiLSTM(f"clf.bilstm{i}", width, s.units, return_sequences=seq))
                width = 2 * s.units
            if attention:
                self.layers += [MultiHeadAttention("clf.attn", width, s.heads), GlobalAvgPool1D()]
        else:
            for i, (f, k) in enumerate(zip(s.filters, s.kernels)):
                self.layers += [Conv1D(f"clf.conv{i}", width, f, k, activation="relu"),
                                MaxPool1D(2)]
                width = f
            if s.kind == "cnn":
                self.layers.append(GlobalAvgPool1D())
            else:
                widths = (width,) + tuple(s.lstm_units)
                for i in range(len(s.lstm_units)):
                    last = i == len(s.lstm_units) - 1
                    self.layers.append(LSTM(f"clf.lstm{i}", widths[i], widths[i + 1],
                                            return_sequences=not last))
                width = widths[-1]
        self.layers += [Dropout(s.dropout), Dense("clf.out", width, s.n_classes, "softmax")]
        self.store = nn.ParamStore()
        self.store.add_buffer("clf.input.mean", np.zeros((s.seq_len, s.n_features)))
        self.store.add_buffer("clf.input.scale", np.ones((s.seq_len, s.n_features)))
        rng = np.random.default_rng(seed)
        for layer in self.layers:
            layer.init(self.store, rng)
        self.trained = False

    def fit_standardizer(self, x) -> None:
        """Per-(position, feature) z-scoring with training-set statistics."""
        x = np.asarray(x, dtype=float)
        self.store.buffers["clf.input.mean"] = x.mean(axis=0)
        self.store.buffers["clf.input.scale"] = 1.0 / (x.std(axis=0) + STD_FLOOR)

    def forward(self, x, ctx: Context = INFERENCE):
        if self.config.standardize:
            x = (np.asarray(x, dtype=float) - self.store.buffers["clf.input.mean"]) \
                * self.store.buffers["clf.input.scale"]
        h = nn.tensor.as_tensor(x)
        for layer in self.layers:
            h = layer(self.store, h, ctx)
        return h

    def param_count(self) -> int:
        return self.store.count()


def build_classifier(spec: ClassifierSpec, seed: int = 0) -> ClassifierModel:
    return ClassifierModel(spec, seed)


def _check_inputs(model: ClassifierModel, x) -> tuple:
    s = model.config
    x = np.asarray(x, dtype=float)
    single = x.ndim == 2
    if single:
        x = x[None]
    if x.ndim != 3 or x.shape[1:] != (s.seq_len, s.n_features):
        raise ValueError(f"expected [{s.seq_len}, {s.n_features}] inputs, got {x.shape}")
    return x, single


@dataclass
class TrainedClassifier:
    model: ClassifierModel
    history: dict = field(default_factory=dict)
    best_epoch: int = 0

    @property
    def spec(self) -> ClassifierSpec:
        return self.model.config

    @property
    def val_recall(self) -> float:
        recalls = self.history.get("val_recall", [])
        return recalls[self.best_epoch - 1] if recalls else float("nan")

    def param_count(self) -> int:
        return self.model.param_count()


def predict(model, x, chunk: int = 256):
    """(probabilities, labels); argmax ties go to the lower class index."""
    if isinstance(model, TrainedClassifier):
        model = model.model
    batch, single = _check_inputs(model, x)
    probs = np.concatenate([model.forward(batch[i:i + chunk]).data
                            for i in range(0, len(batch), chunk)])
    labels = probs.argmax(axis=1)
    return (probs[0], int(labels[0])) if single else (probs, labels)


def _one_hot(labels, k):
    out = np.zeros((len(labels), k))
    out[np.arange(len(labels)), labels] = 1.0
    return out


def macro_recall(model, x, y) -> float:
    _, pred = predict(model, x)
    return macro_prf(confusion_matrix(y, pred, model.config.n_classes))[1]


def train_classifier(model: ClassifierModel, train_x, train_y, val_x, val_y,
                     class_weights=None, seed: int = 0, epochs: int | None = None,
                     callback=None) -> TrainedClassifier:
    """Adam on weighted cross-entropy with best-epoch retention and early stopping.

    ``history`` records per-epoch mean training ``loss`` and macro
    ``val_recall``; the returned model holds the parameters of the best
    epoch (earliest on ties).
    """
    s = model.config
    epochs = s.epochs if epochs is None else epochs
    train_x, _ = _check_inputs(model, train_x)
    train_y = np.asarray(train_y, dtype=int)
    missing = sorted(set(range(s.n_classes)) - set(train_y.tolist()))
    if missing:
        raise ValueError(f"classes {missing} are absent from the training set")
    if len(train_y) != len(train_x):
        raise ValueError("one label per training document required")
    val_x, _ = _check_inputs(model, val_x)
    val_y = np.asarray(val_y, dtype=int)
    weights = None if class_weights is None else np.asarray(class_weights, dtype=float)
    if s.standardize:
        model.fit_standardizer(train_x)
    rng = np.random.default_rng(seed)
    history = {"loss": [], "val_recall": []}
    best, best_epoch, stale = -1.0, 0, 0
    best_params = model.store.snapshot()
    for epoch in range(1, epochs + 1):
        losses, sizes = [], []
        for idx in minibatches(len(train_x), s.batch_size, rng):
            ctx = Context(training=True, rng=rng)
            probs = model.forward(train_x[idx], ctx)
            loss = nn.categorical_cross_entropy(probs, _one_hot(train_y[idx], s.n_classes),
                                                weights)
            nn.adam_step(model.store, nn.gradients(loss, model.store), lr=s.lr)
            losses.append(loss.item())
            sizes.append(len(idx))
        history["loss"].append(float(np.average(losses, weights=sizes)))
        recall = macro_recall(model, val_x, val_y)
        history["val_recall"].append(recall)
        log.debug("%s epoch %d loss %.4f val recall %.4f", s.kind, epoch,
                  history["loss"][-1], recall)
        if callback is not None:
            callback(epoch, model)
        if recall > best:
            best, best_epoch, stale = recall, epoch, 0
            best_params = model.store.snapshot()
        else:
            stale += 1
            if stale >= s.patience:
                break
    model.store.load(best_params)
    model.trained = True
    return TrainedClassifier(model, history, best_epoch)


def select_best(candidates) -> TrainedClassifier:
    """Highest macro validation recall; ties go to the smaller model."""
    candidates = list(candidates)
    if not candidates:
        raise ValueError("select_best needs at least one candidate")
    return min(candidates, key=lambda c: (-c.val_recall, c.param_count()))
