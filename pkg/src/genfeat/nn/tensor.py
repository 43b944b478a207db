"""Dense tensors with reverse-mode automatic differentiation.

Every op returns a new :class:`Tensor`; nothing is mutated after creation.
A node keeps references to its parents and a closure mapping the upstream
gradient to one gradient per parent.  :func:`grad` walks the graph in
reverse topological order.

Recurrent, convolution and pooling kernels are fused ops with hand-written
backward passes; everything else is composed from the elementwise and
linear-algebra primitives below.
"""

from __future__ import annotations

import math

import numpy as np

_DTYPE = np.float64


def set_default_dtype(dtype) -> None:
    """Switch the float type of newly created tensors (float64 or float32)."""
    global _DTYPE
    dtype = np.dtype(dtype)
    if dtype not in (np.float64, np.float32):
        raise ValueError(f"unsupported dtype {dtype}")
    _DTYPE = dtype.type


def default_dtype():
    return _DTYPE


class Tensor:
    __slots__ = ("data", "requires_grad", "parents", "backward_fn")

    __array_priority__ = 100

    def __init__(self, data, requires_grad=False, parents=(), backward_fn=None):
        self.data = np.asarray(data, dtype=_DTYPE)
        self.requires_grad = requires_grad
        self.parents = parents
        self.backward_fn = backward_fn

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}{flag})"

    def __len__(self):
        return len(self.data)

    __add__ = lambda self, other: add(self, other)
    __radd__ = lambda self, other: add(other, self)
    __sub__ = lambda self, other: sub(self, other)
    __rsub__ = lambda self, other: sub(other, self)
    __mul__ = lambda self, other: mul(self, other)
    __rmul__ = lambda self, other: mul(other, self)
    __truediv__ = lambda self, other: div(self, other)
    __rtruediv__ = lambda self, other: div(other, self)
    __matmul__ = lambda self, other: matmul(self, other)
    __neg__ = lambda self: neg(self)
    __pow__ = lambda self, p: power(self, p)
    __getitem__ = lambda self, idx: getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def constant(x) -> Tensor:
    return Tensor(x)


def parameter(x) -> Tensor:
    return Tensor(x, requires_grad=True)


def _node(data, parents, backward_fn) -> Tensor:
    if any(p.requires_grad for p in parents):
        return Tensor(data, True, tuple(parents), backward_fn)
    return Tensor(data)


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# ---------------------------------------------------------------------------
# autodiff driver


def _topo_order(root: Tensor):
    order, seen = [], set()
    stack = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node.parents:
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    return order


def grad(loss: Tensor, wrt) -> list:
    """Return d(loss)/d(t) as arrays for each tensor in ``wrt``.

    Tensors the loss does not depend on get zero arrays of matching shape.
    """
    if loss.data.ndim != 0 and loss.data.size != 1:
        raise ValueError(f"loss must be a scalar, got shape {loss.shape}")
    wrt = list(wrt)
    keep = {id(t) for t in wrt}
    found = {}
    if loss.requires_grad:
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(_topo_order(loss)):
            g = grads.get(id(node)) if id(node) in keep else grads.pop(id(node), None)
            if id(node) in keep and g is not None:
                found[id(node)] = g
            if g is None or node.backward_fn is None:
                continue
            for parent, pg in zip(node.parents, node.backward_fn(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
    return [found[id(t)] if id(t) in found else np.zeros_like(t.data) for t in wrt]


# ---------------------------------------------------------------------------
# elementwise arithmetic


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _node(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data
    return _node(out, (a, b),
                 lambda g: (_unbroadcast(g / b.data, a.shape),
                            _unbroadcast(-g * out / b.data, b.shape)))


def neg(a) -> Tensor:
    a = as_tensor(a)
    return _node(-a.data, (a,), lambda g: (-g,))


def power(a, p: float) -> Tensor:
    a = as_tensor(a)
    return _node(a.data ** p, (a,), lambda g: (g * p * a.data ** (p - 1),))


def exp(a) -> Tensor:
    a = as_tensor(a)
    out = np.exp(a.data)
    return _node(out, (a,), lambda g: (g * out,))


def log(a) -> Tensor:
    a = as_tensor(a)
    return _node(np.log(a.data), (a,), lambda g: (g / a.data,))


def clip(a, lo: float, hi: float) -> Tensor:
    """Clamp values; the gradient is zero where clamping is active."""
    a = as_tensor(a)
    inside = (a.data >= lo) & (a.data <= hi)
    return _node(np.clip(a.data, lo, hi), (a,), lambda g: (g * inside,))


# ---------------------------------------------------------------------------
# activations


def tanh(a) -> Tensor:
    a = as_tensor(a)
    out = np.tanh(a.data)
    return _node(out, (a,), lambda g: (g * (1.0 - out * out),))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # tanh form is overflow-free for any input
    return 0.5 * np.tanh(0.5 * x) + 0.5


def sigmoid(a) -> Tensor:
    a = as_tensor(a)
    out = _sigmoid(a.data)
    return _node(out, (a,), lambda g: (g * out * (1.0 - out),))


def relu(a) -> Tensor:
    a = as_tensor(a)
    mask = a.data > 0
    return _node(a.data * mask, (a,), lambda g: (g * mask,))


def leaky_relu(a, slope: float = 0.2) -> Tensor:
    a = as_tensor(a)
    scale = np.where(a.data > 0, 1.0, slope)
    return _node(a.data * scale, (a,), lambda g: (g * scale,))


def elu(a, alpha: float = 1.0) -> Tensor:
    a = as_tensor(a)
    pos = a.data > 0
    em1 = np.expm1(np.minimum(a.data, 0.0))
    out = np.where(pos, a.data, alpha * em1)
    return _node(out, (a,), lambda g: (g * np.where(pos, 1.0, alpha * (em1 + 1.0)),))


def softmax(a, axis: int = -1) -> Tensor:
    a = as_tensor(a)
    z = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _node(out, (a,), backward)


# ---------------------------------------------------------------------------
# reductions and shape manipulation


def tsum(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return _node(out, (a,), backward)


def mean(a, axis=None, keepdims=False) -> Tensor:
    a = as_tensor(a)
    if axis is None:
        count = a.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = math.prod(a.shape[ax] for ax in axes)
    return tsum(a, axis, keepdims) * (1.0 / count)


def reshape(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def transpose(a, axes=None) -> Tensor:
    a = as_tensor(a)
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = np.argsort(axes)
    return _node(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),))


def swap_last(a) -> Tensor:
    axes = list(range(as_tensor(a).ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(a, tuple(axes))


def _is_basic_index(idx) -> bool:
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis
               for p in parts)


def getitem(a, idx) -> Tensor:
    a = as_tensor(a)
    basic = _is_basic_index(idx)

    def backward(g):
        out = np.zeros_like(a.data)
        if basic:
            out[idx] = g
        else:
            np.add.at(out, idx, g)
        return (out,)

    return _node(a.data[idx], (a,), backward)


def concat(tensors, axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    return _node(np.concatenate([t.data for t in tensors], axis=axis), tensors,
                 lambda g: tuple(np.split(g, splits, axis=axis)))


def broadcast_to(a, shape) -> Tensor:
    a = as_tensor(a)
    return _node(np.broadcast_to(a.data, shape).copy(), (a,),
                 lambda g: (_unbroadcast(g, a.shape),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError("matmul operands must be at least 2-D")

    def backward(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)

    return _node(a.data @ b.data, (a, b), backward)


def embedding(table, indices) -> Tensor:
    """Gather rows of ``table`` [V, D] at integer ``indices`` of any shape."""
    table = as_tensor(table)
    indices = np.asarray(indices)
    if not np.issubdtype(indices.dtype, np.integer):
        raise TypeError("embedding indices must be integers")
    vocab = table.shape[0]
    if indices.size and (indices.min() < 0 or indices.max() >= vocab):
        raise IndexError(f"embedding index out of range [0, {vocab})")

    def backward(g):
        out = np.zeros_like(table.data)
        np.add.at(out, indices.reshape(-1), g.reshape(-1, table.shape[1]))
        return (out,)

    return _node(table.data[indices], (table,), backward)


# ---------------------------------------------------------------------------
# fused recurrent kernel


def lstm(x, w_in, w_rec, bias, reverse: bool = False) -> Tensor:
    """Run an LSTM over ``x`` [N, T, D] and return hidden states [N, T, U].

    Gate column layout in ``w_in`` [D, 4U], ``w_rec`` [U, 4U], ``bias`` [4U]
    is input, forget, cell candidate, output.  State starts at zero.  With
    ``reverse`` the sequence is consumed back to front; outputs stay aligned
    with input positions.
    """
    x, w_in, w_rec, bias = (as_tensor(t) for t in (x, w_in, w_rec, bias))
    n, steps, d = x.shape
    if w_in.shape[0] != d:
        raise ValueError(f"LSTM input width {d} does not match weights {w_in.shape}")
    units = w_rec.shape[0]
    if w_in.shape[1] != 4 * units or w_rec.shape[1] != 4 * units or bias.shape != (4 * units,):
        raise ValueError("inconsistent LSTM weight shapes")
    R = w_rec.data
    u = units
    # time-major buffers keep each step's slices contiguous
    proj = np.ascontiguousarray(np.swapaxes(x.data @ w_in.data + bias.data, 0, 1))
    dt = proj.dtype
    scale = np.full(4 * u, 0.5, dt)
    scale[2 * u:3 * u] = 1.0
    G = np.empty((steps, n, 4 * u), dt)
    C = np.empty((steps, n, u), dt)
    TC = np.empty((steps, n, u), dt)
    HS = np.empty((steps, n, u), dt)
    h = np.zeros((n, u), dt)
    c = np.zeros((n, u), dt)
    order = list(range(steps - 1, -1, -1)) if reverse else list(range(steps))
    for t in order:
        # sigmoid(a) = 0.5 tanh(a / 2) + 0.5 on the i, f, o columns
        gates = np.tanh((proj[t] + h @ R) * scale, out=G[t])
        gates[:, :2 * u] *= 0.5
        gates[:, :2 * u] += 0.5
        gates[:, 3 * u:] *= 0.5
        gates[:, 3 * u:] += 0.5
        c = gates[:, u:2 * u] * c + gates[:, :u] * gates[:, 2 * u:3 * u]
        C[t] = c
        tc = np.tanh(c, out=TC[t])
        h = np.multiply(gates[:, 3 * u:], tc, out=HS[t])

    def backward(dH):
        dH = np.swapaxes(dH, 0, 1)
        dA = np.empty_like(G)
        H_prev = np.zeros_like(HS)
        dh_next = np.zeros((n, u), dt)
        dc_next = np.zeros((n, u), dt)
        for k in range(len(order) - 1, -1, -1):
            t = order[k]
            c_prev = C[order[k - 1]] if k > 0 else 0.0
            if k > 0:
                H_prev[t] = HS[order[k - 1]]
            i, f = G[t, :, :u], G[t, :, u:2 * u]
            gg, o = G[t, :, 2 * u:3 * u], G[t, :, 3 * u:]
            tc = TC[t]
            dh = dH[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            da = dA[t]
            da[:, :u] = dc * gg * i * (1.0 - i)
            da[:, u:2 * u] = dc * c_prev * f * (1.0 - f)
            da[:, 2 * u:3 * u] = dc * i * (1.0 - gg * gg)
            da[:, 3 * u:] = dh * tc * o * (1.0 - o)
            dc_next = dc * f
            dh_next = da @ R.T
        dA_flat = dA.reshape(-1, 4 * u)
        dx = np.swapaxes(dA @ w_in.data.T, 0, 1)
        dw_in = np.swapaxes(x.data, 0, 1).reshape(-1, d).T @ dA_flat
        dw_rec = H_prev.reshape(-1, u).T @ dA_flat
        db = dA_flat.sum(axis=0)
        return dx, dw_in, dw_rec, db

    H = np.ascontiguousarray(np.swapaxes(HS, 0, 1))
    return _node(H, (x, w_in, w_rec, bias), backward)


# ---------------------------------------------------------------------------
# fused 1-D convolution kernels (positions on axis 1, channels last)


def _same_padding(length: int, kernel: int, stride: int):
    out_len = -(-length // stride)
    total = max((out_len - 1) * stride + kernel - length, 0)
    return out_len, total // 2, total - total // 2


def _windows(out_len: int, kernel: int, stride: int) -> np.ndarray:
    return np.arange(out_len)[:, None] * stride + np.arange(kernel)[None, :]


def _conv_forward(x: np.ndarray, w: np.ndarray, stride: int):
    n, length, _ = x.shape
    kernel = w.shape[0]
    out_len, left, right = _same_padding(length, kernel, stride)
    xp = np.pad(x, ((0, 0), (left, right), (0, 0)))
    cols = xp[:, _windows(out_len, kernel, stride)]
    return np.tensordot(cols, w, axes=([2, 3], [0, 1])), cols


def _conv_input_grad(g: np.ndarray, w: np.ndarray, stride: int, length: int) -> np.ndarray:
    n, out_len, _ = g.shape
    kernel = w.shape[0]
    expected, left, right = _same_padding(length, kernel, stride)
    if expected != out_len:
        raise ValueError(f"length {out_len} is not the stride-{stride} image of {length}")
    dcols = np.tensordot(g, w, axes=([2], [2]))  # [N, T', K, C]
    dxp = np.zeros((n, length + left + right, w.shape[1]), g.dtype)
    idx = _windows(out_len, kernel, stride)
    for k in range(kernel):
        dxp[:, idx[:, k]] += dcols[:, :, k]
    return dxp[:, left:left + length]


def conv1d(x, w, b, stride: int = 1) -> Tensor:
    """Same-padded cross-correlation: x [N, T, Cin], w [K, Cin, Cout] -> [N, ceil(T/s), Cout]."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.shape[2] != w.shape[1]:
        raise ValueError(f"conv1d expects {w.shape[1]} input channels, got {x.shape[2]}")
    out, cols = _conv_forward(x.data, w.data, stride)

    def backward(g):
        dw = np.tensordot(cols, g, axes=([0, 1], [0, 1]))
        dx = _conv_input_grad(g, w.data, stride, x.shape[1])
        return dx, dw, g.sum(axis=(0, 1))

    return _node(out + b.data, (x, w, b), backward)


def conv1d_transpose(y, w, b, stride: int = 2) -> Tensor:
    """Fractionally-strided convolution: y [N, T, Cin], w [K, Cout, Cin] -> [N, s*T, Cout].

    Without the bias this is exactly the adjoint of ``conv1d`` with the same
    kernel ``w`` mapping Cout channels at length s*T down to Cin channels.
    """
    y, w, b = as_tensor(y), as_tensor(w), as_tensor(b)
    if y.shape[2] != w.shape[2]:
        raise ValueError(f"conv1d_transpose expects {w.shape[2]} input channels, got {y.shape[2]}")
    length = stride * y.shape[1]
    out = _conv_input_grad(y.data, w.data, stride, length)

    def backward(g):
        dy, cols = _conv_forward(g, w.data, stride)
        dw = np.tensordot(cols, y.data, axes=([0, 1], [0, 1]))
        return dy, dw, g.sum(axis=(0, 1))

    return _node(out + b.data, (y, w, b), backward)


def max_pool1d(x, pool: int = 2) -> Tensor:
    """Non-overlapping max pooling over axis 1 of [N, T, C].

    A length not divisible by ``pool`` is padded by repeating the last frame.
    """
    x = as_tensor(x)
    n, length, ch = x.shape
    padded = -(-length // pool) * pool
    data = x.data
    if padded != length:
        data = np.concatenate([data, np.repeat(data[:, -1:], padded - length, axis=1)], axis=1)
    windows = data.reshape(n, padded // pool, pool, ch)
    arg = windows.argmax(axis=2)
    out = np.take_along_axis(windows, arg[:, :, None], axis=2)[:, :, 0]

    def backward(g):
        dw = np.zeros_like(windows)
        np.put_along_axis(dw, arg[:, :, None], g[:, :, None], axis=2)
        dp = dw.reshape(n, padded, ch)
        dx = dp[:, :length].copy()
        dx[:, -1] += dp[:, length:].sum(axis=1)
        return (dx,)

    return _node(out, (x,), backward)
