"""Named parameter storage, gradient collection and the Adam update."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, grad


@dataclass
class AdamSlot:
    m: np.ndarray
    v: np.ndarray
    step: int = 0


@dataclass
class ParamStore:
    """Trainable tensors by name, non-trainable buffers, and Adam moments.

    Adam state lives in named slots so that several optimizers (for example
    the autoencoder and the adversarial phase of an AAE) can keep separate
    moments for a shared parameter.
    """

    params: dict = field(default_factory=dict)
    buffers: dict = field(default_factory=dict)
    adam: dict = field(default_factory=dict)

    def add(self, name: str, value) -> Tensor:
        if name in self.params:
            raise KeyError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value), requires_grad=True)
        self.params[name] = t
        return t

    def add_buffer(self, name: str, value) -> None:
        self.buffers[name] = np.array(value, dtype=float)

    def __getitem__(self, name: str) -> Tensor:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def names(self, prefix: str | tuple = "") -> list:
        return [n for n in self.params if n.startswith(prefix)]

    def count(self) -> int:
        return sum(t.size for t in self.params.values())

    def snapshot(self, names=None) -> dict:
        names = self.params if names is None else names
        out = {n: self.params[n].data.copy() for n in names}
        out.update({"@" + n: b.copy() for n, b in self.buffers.items()})
        return out

    def load(self, arrays: dict) -> None:
        for name, value in arrays.items():
            if name.startswith("@"):
                self.buffers[name[1:]] = np.array(value, dtype=float)
            else:
                if name in self.params and self.params[name].shape != np.shape(value):
                    raise ValueError(f"shape mismatch for {name}")
                self.params[name] = Tensor(np.array(value), requires_grad=True)


def gradients(loss: Tensor, params, names=None) -> dict:
    """Map each parameter name to d(loss)/d(param).

    Parameters the loss does not reach get zero gradients of matching shape.
    """
    table = params.params if isinstance(params, ParamStore) else params
    names = list(table) if names is None else list(names)
    return dict(zip(names, grad(loss, [table[n] for n in names])))


def adam_step(store: ParamStore, grads: dict, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8, slot: str = "adam") -> ParamStore:
    moments = store.adam.setdefault(slot, {})
    for name, g in grads.items():
        p = store.params[name]
        if g.shape != p.shape:
            raise ValueError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        st = moments.get(name)
        if st is None:
            st = moments[name] = AdamSlot(np.zeros_like(p.data), np.zeros_like(p.data))
        st.step += 1
        st.m = beta1 * st.m + (1.0 - beta1) * g
        st.v = beta2 * st.v + (1.0 - beta2) * g * g
        m_hat = st.m / (1.0 - beta1 ** st.step)
        v_hat = st.v / (1.0 - beta2 ** st.step)
        store.params[name] = Tensor(p.data - lr * m_hat / (np.sqrt(v_hat) + eps),
                                    requires_grad=True)
    return store
