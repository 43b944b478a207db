"""Central finite-difference gradient checking."""

from __future__ import annotations

import numpy as np

from .tensor import Tensor, grad


def numeric_gradient(fn, arrays: dict, name: str, coords, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``fn(arrays)`` at selected flat coordinates."""
    base = arrays[name]
    out = np.empty(len(coords))
    for i, c in enumerate(coords):
        bumped = base.copy()
        bumped.flat[c] += h
        up = fn({**arrays, name: bumped})
        bumped.flat[c] -= 2 * h
        down = fn({**arrays, name: bumped})
        out[i] = (up - down) / (2 * h)
    return out


def check_gradients(build_loss, arrays: dict, h: float = 1e-5, max_coords: int | None = 24,
                    rng: np.random.Generator | None = None, floor: float = 1e-6) -> float:
    """Largest relative error between autodiff and finite-difference gradients.

    ``build_loss`` maps a dict of tensors (same keys as ``arrays``) to a
    scalar tensor.  The error for each input is ||a - n|| / max(||a|| + ||n||, floor * g)
    over (at most ``max_coords``) sampled coordinates, where ``g`` is the
    largest analytic gradient norm over all inputs (1 if every gradient is
    zero).  The floor keeps gradients that vanish identically (such as an
    attention key bias, which softmax ignores) from turning finite-difference
    roundoff into a large relative error; it is relative to ``g`` because
    that roundoff grows with the scale of the function.
    """
    rng = rng or np.random.default_rng(0)
    tensors = {k: Tensor(v, requires_grad=True) for k, v in arrays.items()}
    analytic = dict(zip(tensors, grad(build_loss(tensors), list(tensors.values()))))

    def scalar(arrs):
        return float(build_loss({k: Tensor(v) for k, v in arrs.items()}).data)

    scale = max((float(np.linalg.norm(a)) for a in analytic.values()), default=0.0) or 1.0
    worst = 0.0
    for name, value in arrays.items():
        n = value.size
        coords = np.arange(n) if max_coords is None or n <= max_coords else \
            rng.choice(n, size=max_coords, replace=False)
        num = numeric_gradient(scalar, arrays, name, coords, h)
        ana = analytic[name].reshape(-1)[coords]
        denom = max(np.linalg.norm(ana) + np.linalg.norm(num), floor * scale)
        worst = max(worst, float(np.linalg.norm(ana - num) / denom))
    return worst
