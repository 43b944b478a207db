"""Scalar training losses built from differentiable tensor ops."""

from __future__ import annotations

import numpy as np

from . import tensor as T
from .tensor import Tensor

PROB_EPS = 1e-7


def _check_shapes(a: Tensor, b: Tensor, what: str) -> None:
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def kl_gaussian(mu, logvar) -> Tensor:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over every element."""
    mu, logvar = T.as_tensor(mu), T.as_tensor(logvar)
    _check_shapes(mu, logvar, "kl_gaussian")
    return (1.0 + logvar - mu * mu - T.exp(logvar)).sum() * -0.5


def binary_cross_entropy(pred, target, eps: float = PROB_EPS) -> Tensor:
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    _check_shapes(pred, target, "binary_cross_entropy")
    if not np.isin(target.data, (0.0, 1.0)).all():
        raise ValueError("binary_cross_entropy targets must be 0 or 1")
    p = T.clip(pred, eps, 1.0 - eps)
    y = target.data
    return -(y * T.log(p) + (1.0 - y) * T.log(1.0 - p)).mean()


def categorical_cross_entropy(pred, target, class_weights=None, eps: float = PROB_EPS) -> Tensor:
    """Class-weighted mean of -sum_c y_c log p_c over rows.

    The weighted mean divides by the total weight of the target rows, so a
    constant weight vector gives the unweighted loss.
    """
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    _check_shapes(pred, target, "categorical_cross_entropy")
    if np.abs(pred.data.sum(axis=-1) - 1.0).max(initial=0.0) > 1e-6:
        raise ValueError("categorical_cross_entropy: prediction rows must sum to 1")
    y = target.data.reshape(-1, pred.shape[-1])
    p = T.clip(pred, eps, 1.0).reshape(-1, pred.shape[-1])
    w = np.ones(pred.shape[-1]) if class_weights is None else np.asarray(class_weights, float)
    if w.shape != (pred.shape[-1],):
        raise ValueError(f"expected {pred.shape[-1]} class weights, got {w.shape}")
    row_w = y @ w
    per_row = -(T.log(p) * y).sum(axis=-1)
    return (per_row * row_w).sum() * (1.0 / row_w.sum())


def mean_squared_error(pred, target) -> Tensor:
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    _check_shapes(pred, target, "mean_squared_error")
    diff = pred - target
    return (diff * diff).mean()
