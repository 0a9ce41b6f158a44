"""
Dense tensors with reverse-mode automatic differentiation.

Every differentiable operation creates a new :class:`Tensor` holding a
reference to its inputs and a closure mapping the output gradient to
input gradients. :func:`backward` linearizes the graph into a
:class:`Tape` (inputs always precede their consumers) and replays it in
reverse.

Besides the elementwise algebra, this module carries the fused
primitives the table network leans on: padded 2D convolution, valid 1D
convolution, an LSTM layer with hand-written backpropagation through
time, batch normalization and inverted dropout.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ContractError, EmptyInputError, ShapeError

DEFAULT_DTYPE = np.float64

_ids = itertools.count()


class Tensor:
    """A numpy array plus the bookkeeping needed for backpropagation."""

    def __init__(self, data, requires_grad: bool = False, parents: Sequence["Tensor"] = (),
                 backward_fn: Optional[Callable] = None, op: str = "leaf", name: Optional[str] = None):
        if isinstance(data, np.ndarray) and data.dtype in (np.float32, np.float64):
            self.data = data
        elif isinstance(data, np.generic) and data.dtype in (np.float32, np.float64):
            self.data = np.asarray(data)
        else:
            self.data = np.asarray(data, dtype=DEFAULT_DTYPE)
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self.parents = tuple(parents)
        self.backward_fn = backward_fn
        self.op = op
        self.name = name
        self.id = next(_ids)

    # -- introspection -------------------------------------------------
    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, op={self.op}{label}, requires_grad={self.requires_grad})"

    # -- operators -----------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            return mul(self, reciprocal(other))
        return mul(self, 1.0 / np.asarray(other, dtype=self.dtype))

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return getitem(self, index)

    def sum(self, axis=None):
        return tsum(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        return transpose(self, axes or None)

    @property
    def T(self):
        return transpose(self, None)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def parameter(data, name: Optional[str] = None, dtype=None) -> Tensor:
    return Tensor(np.array(data, dtype=dtype or DEFAULT_DTYPE), requires_grad=True, name=name)


def _pair(a, b) -> tuple[Tensor, Tensor]:
    # constants adopt the dtype of the tensor operand so float32 stays float32
    if isinstance(a, Tensor) and not isinstance(b, Tensor):
        return a, Tensor(np.asarray(b, dtype=a.dtype))
    if isinstance(b, Tensor) and not isinstance(a, Tensor):
        return Tensor(np.asarray(a, dtype=b.dtype)), b
    return as_tensor(a), as_tensor(b)


def _make(data, parents, backward_fn, op) -> Tensor:
    """Wrap a forward result; attach the backward closure only when needed."""
    if any(p.requires_grad for p in parents):
        return Tensor(data, requires_grad=True, parents=parents, backward_fn=backward_fn, op=op)
    return Tensor(data, op=op)


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    if grad.shape == shape:
        return grad
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, size in enumerate(shape):
        if size == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


# ----------------------------------------------------------------------
# Tape and backward pass
# ----------------------------------------------------------------------


@dataclass
class Tape:
    """Topologically ordered record of the operations behind a result.

    ``nodes[k]`` never depends on ``nodes[m]`` for ``m > k``.
    """

    nodes: list = field(default_factory=list)

    @classmethod
    def trace(cls, root: Tensor) -> "Tape":
        order, seen = [], set()
        stack = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if node.id in seen:
                continue
            seen.add(node.id)
            stack.append((node, True))
            for parent in node.parents:
                if parent.requires_grad and parent.id not in seen:
                    stack.append((parent, False))
        return cls(order)

    def records(self) -> list[tuple[int, str, tuple[int, ...]]]:
        return [(n.id, n.op, tuple(p.id for p in n.parents)) for n in self.nodes]

    def __len__(self) -> int:
        return len(self.nodes)


def backward(loss: Tensor) -> Tape:
    """Populate ``.grad`` on every differentiable node reachable from ``loss``.

    Leaf gradients accumulate across calls; interior gradients are overwritten.
    """
    if loss.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return Tape([])
    tape = Tape.trace(loss)
    interior = {}
    interior[loss.id] = np.ones_like(loss.data)
    for node in reversed(tape.nodes):
        g = interior.pop(node.id, None)
        if g is None:
            continue
        if node.backward_fn is None:
            node.grad = g if node.grad is None else node.grad + g
            continue
        node.grad = g
        grads = node.backward_fn(g)
        for parent, pg in zip(node.parents, grads):
            if pg is None or not parent.requires_grad:
                continue
            prev = interior.get(parent.id)
            interior[parent.id] = pg if prev is None else prev + pg
    return tape


# ----------------------------------------------------------------------
# Elementwise algebra
# ----------------------------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)), "add")


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)), "sub")


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    ad, bd = a.data, b.data
    return _make(ad * bd, (a, b),
                 lambda g: (_unbroadcast(g * bd, ad.shape), _unbroadcast(g * ad, bd.shape)), "mul")


def reciprocal(a: Tensor) -> Tensor:
    out = 1.0 / a.data
    return _make(out, (a,), lambda g: (-g * out * out,), "reciprocal")


def scale_grad(a: Tensor, factor: float) -> Tensor:
    """Identity forward; multiplies the incoming gradient by ``factor``."""
    return _make(a.data, (a,), lambda g: (g * factor,), "scale_grad")


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _make(out, (a,), lambda g: (g * out,), "exp")


def log(a: Tensor) -> Tensor:
    x = a.data
    return _make(np.log(x), (a,), lambda g: (g / x,), "log")


def clamp_min(a: Tensor, floor: float) -> Tensor:
    x = a.data
    keep = x >= floor
    return _make(np.where(keep, x, floor), (a,), lambda g: (g * keep,), "clamp_min")


def relu(a: Tensor) -> Tensor:
    mask = a.data > 0
    return _make(a.data * mask, (a,), lambda g: (g * mask,), "relu")


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def sigmoid(a: Tensor) -> Tensor:
    out = _sigmoid(a.data)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),), "sigmoid")


# ----------------------------------------------------------------------
# Reductions and shape manipulation
# ----------------------------------------------------------------------


def tsum(a: Tensor, axis=None) -> Tensor:
    shape = a.shape
    out = a.data.sum(axis=axis)

    def bw(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, shape).copy(),)

    return _make(out, (a,), bw, "sum")


def mean(a: Tensor, axis=None) -> Tensor:
    count = a.size if axis is None else np.prod([a.shape[i] for i in np.atleast_1d(axis)])
    return mul(tsum(a, axis), 1.0 / count)


def tmax(a: Tensor, axis: int) -> Tensor:
    """Max along one axis; the gradient goes to the first maximizer."""
    x = a.data
    idx = np.argmax(x, axis=axis)
    out = np.take_along_axis(x, np.expand_dims(idx, axis), axis=axis).squeeze(axis)

    def bw(g):
        gx = np.zeros_like(x)
        np.put_along_axis(gx, np.expand_dims(idx, axis), np.expand_dims(g, axis), axis=axis)
        return (gx,)

    return _make(out, (a,), bw, "max")


def reshape(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(old),), "reshape")


def transpose(a: Tensor, axes=None) -> Tensor:
    inv = None if axes is None else tuple(np.argsort(axes))
    return _make(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),), "transpose")


def getitem(a: Tensor, index) -> Tensor:
    shape = a.shape

    fancy = any(isinstance(i, (list, np.ndarray)) for i in (index if isinstance(index, tuple) else (index,)))

    def bw(g):
        gx = np.zeros(shape, dtype=g.dtype)
        if fancy:
            np.add.at(gx, index, g)
        else:
            gx[index] += g
        return (gx,)

    return _make(a.data[index], (a,), bw, "getitem")


def take_rows(table: Tensor, indices) -> Tensor:
    """Embedding lookup; only the looked-up rows receive gradient."""
    idx = np.asarray(indices, dtype=np.int64)
    return getitem(table, idx)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]
    out = np.concatenate([t.data for t in tensors], axis=axis)
    return _make(out, tuple(tensors), lambda g: tuple(np.split(g, splits, axis=axis)), "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    out = np.stack([t.data for t in tensors], axis=axis)
    return _make(out, tuple(tensors),
                 lambda g: tuple(np.take(g, k, axis=axis) for k in range(len(tensors))), "stack")


def broadcast_to(a: Tensor, shape) -> Tensor:
    old = a.shape
    return _make(np.broadcast_to(a.data, shape).copy(), (a,), lambda g: (_unbroadcast(g, old),), "broadcast")


# ----------------------------------------------------------------------
# Linear algebra
# ----------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul expects 2-D operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dimensions differ: {a.shape} @ {b.shape}")
    ad, bd = a.data, b.data
    return _make(ad @ bd, (a, b), lambda g: (g @ bd.T, ad.T @ g), "matmul")


def einsum(spec: str, a: Tensor, b: Tensor) -> Tensor:
    """Two-operand einsum. Every input index must survive in the other
    operand or the output, so each gradient is itself an einsum."""
    a, b = as_tensor(a), as_tensor(b)
    ins, out_idx = spec.replace(" ", "").split("->")
    ia, ib = ins.split(",")
    for own, other in ((ia, ib), (ib, ia)):
        if any(c not in other and c not in out_idx for c in own):
            raise ContractError(f"einsum {spec!r}: summed-out index private to one operand")
    ad, bd = a.data, b.data
    out = np.einsum(spec, ad, bd, optimize=True)
    return _make(out, (a, b), lambda g: (np.einsum(f"{out_idx},{ib}->{ia}", g, bd, optimize=True),
                                         np.einsum(f"{out_idx},{ia}->{ib}", g, ad, optimize=True)), "einsum")


# ----------------------------------------------------------------------
# Softmax and friends
# ----------------------------------------------------------------------


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    e = np.exp(x - x.max(axis=axis, keepdims=True))
    out = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return _make(out, (a,), bw, "softmax")


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data
    shifted = x - x.max(axis=axis, keepdims=True)
    out = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))
    probs = np.exp(out)

    def bw(g):
        return (g - probs * g.sum(axis=axis, keepdims=True),)

    return _make(out, (a,), bw, "log_softmax")


# ----------------------------------------------------------------------
# Convolutions
# ----------------------------------------------------------------------


def conv2d_padded(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Zero-padded 2D convolution over the first two axes of an n x n x u tensor.

    ``w`` has shape (v, t, t, u) for an odd window t; the output is n x n x v,
    so the positional axes are unchanged.
    """
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    if x.ndim != 3:
        raise ShapeError(f"conv2d_padded input must be 3-D, got {x.shape}")
    n, n2, u = x.shape
    if n == 0 or n2 == 0:
        raise EmptyInputError("conv2d_padded on an empty table")
    if n != n2:
        raise ShapeError(f"conv2d_padded input must be square in its first two axes, got {x.shape}")
    if w.ndim != 4 or w.shape[1] != w.shape[2] or w.shape[1] % 2 == 0:
        raise ShapeError(f"filters must be (v, t, t, u) with odd t, got {w.shape}")
    v, t, _, wu = w.shape
    if wu != u:
        raise ShapeError(f"filter depth {wu} does not match input channels {u}")
    if b.shape != (v,):
        raise ShapeError(f"bias must have shape ({v},), got {b.shape}")
    p = t // 2
    xp = np.pad(x.data, ((p, p), (p, p), (0, 0)))
    # (n, n, u, t, t) -> (n, n, t, t, u) -> rows of flattened windows
    cols = sliding_window_view(xp, (t, t), axis=(0, 1)).transpose(0, 1, 3, 4, 2).reshape(n * n, t * t * u)
    wf = w.data.reshape(v, t * t * u)
    out = (cols @ wf.T).reshape(n, n, v) + b.data

    def bw(g):
        g2 = g.reshape(n * n, v)
        gw = (g2.T @ cols).reshape(v, t, t, u)
        gb = g2.sum(axis=0)
        gcols = (g2 @ wf).reshape(n, n, t, t, u)
        gxp = np.zeros_like(xp)
        for di in range(t):
            for dj in range(t):
                gxp[di:di + n, dj:dj + n] += gcols[:, :, di, dj]
        return gxp[p:p + n, p:p + n], gw, gb

    return _make(out, (x, w, b), bw, "conv2d_padded")


def conv1d_valid(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Unpadded 1D convolution: (m, L, c) with filters (k, t, c) -> (m, L-t+1, k)."""
    x, w, b = as_tensor(x), as_tensor(w), as_tensor(b)
    m, length, c = x.shape
    k, t, wc = w.shape
    if wc != c:
        raise ShapeError(f"filter depth {wc} does not match input channels {c}")
    if length < t:
        raise ShapeError(f"sequence length {length} shorter than window {t}")
    steps = length - t + 1
    cols = sliding_window_view(x.data, t, axis=1).transpose(0, 1, 3, 2).reshape(m * steps, t * c)
    wf = w.data.reshape(k, t * c)
    out = (cols @ wf.T).reshape(m, steps, k) + b.data

    def bw(g):
        g2 = g.reshape(m * steps, k)
        gw = (g2.T @ cols).reshape(k, t, c)
        gcols = (g2 @ wf).reshape(m, steps, t, c)
        gx = np.zeros_like(x.data)
        for d in range(t):
            gx[:, d:d + steps] += gcols[:, :, d]
        return gx, gw, g2.sum(axis=0)

    return _make(out, (x, w, b), bw, "conv1d_valid")


# ----------------------------------------------------------------------
# Recurrent layer
# ----------------------------------------------------------------------


def lstm(x: Tensor, wx: Tensor, wh: Tensor, b: Tensor, reverse: bool = False) -> Tensor:
    """Single-direction LSTM over the rows of ``x`` (n x d), returning n x h.

    Gate blocks in ``wx`` (d x 4h), ``wh`` (h x 4h) and ``b`` (4h) are ordered
    input, forget, output, candidate. With ``reverse`` the sequence is read
    from the last row to the first and the outputs are re-aligned to the
    input positions.
    """
    x, wx, wh, b = as_tensor(x), as_tensor(wx), as_tensor(wh), as_tensor(b)
    n, d = x.shape
    h = wh.shape[0]
    if wx.shape != (d, 4 * h) or wh.shape != (h, 4 * h) or b.shape != (4 * h,):
        raise ShapeError(f"lstm weights {wx.shape}, {wh.shape}, {b.shape} inconsistent with input {x.shape}")
    xs = x.data[::-1] if reverse else x.data
    dtype = x.data.dtype
    zx = xs @ wx.data + b.data
    hs = np.zeros((n + 1, h), dtype=dtype)
    cs = np.zeros((n + 1, h), dtype=dtype)
    gates = np.zeros((n, 4 * h), dtype=dtype)
    for t in range(n):
        z = zx[t] + hs[t] @ wh.data
        ifo = _sigmoid(z[:3 * h])
        gg = np.tanh(z[3 * h:])
        gates[t, :3 * h] = ifo
        gates[t, 3 * h:] = gg
        cs[t + 1] = ifo[h:2 * h] * cs[t] + ifo[:h] * gg
        hs[t + 1] = ifo[2 * h:] * np.tanh(cs[t + 1])
    out = hs[1:][::-1] if reverse else hs[1:]

    def bw(g):
        g = g[::-1] if reverse else g
        dz = np.zeros((n, 4 * h), dtype=g.dtype)
        dh_next = np.zeros(h, dtype=g.dtype)
        dc_next = np.zeros(h, dtype=g.dtype)
        whd = wh.data
        for t in reversed(range(n)):
            i, f, o, c_hat = (gates[t, :h], gates[t, h:2 * h], gates[t, 2 * h:3 * h], gates[t, 3 * h:])
            tc = np.tanh(cs[t + 1])
            dh = g[t] + dh_next
            dc = dh * o * (1.0 - tc * tc) + dc_next
            dz[t, :h] = dc * c_hat * i * (1.0 - i)
            dz[t, h:2 * h] = dc * cs[t] * f * (1.0 - f)
            dz[t, 2 * h:3 * h] = dh * tc * o * (1.0 - o)
            dz[t, 3 * h:] = dc * i * (1.0 - c_hat * c_hat)
            dc_next = dc * f
            dh_next = dz[t] @ whd.T
        gx = dz @ wx.data.T
        if reverse:
            gx = gx[::-1]
        return np.ascontiguousarray(gx), xs.T @ dz, hs[:-1].T @ dz, dz.sum(axis=0)

    return _make(np.ascontiguousarray(out), (x, wx, wh, b), bw, "lstm")


# ----------------------------------------------------------------------
# Regularizers
# ----------------------------------------------------------------------


class BatchNorm:
    """Per-channel normalization over the last axis.

    Training mode normalizes with the statistics of the current input and
    folds them into exponential running averages; inference mode uses the
    running averages only.
    """

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5,
                 dtype=DEFAULT_DTYPE, name: str = "bn"):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.scale = Tensor(np.ones(channels, dtype=dtype), requires_grad=True, name=f"{name}.scale")
        self.shift = Tensor(np.zeros(channels, dtype=dtype), requires_grad=True, name=f"{name}.shift")
        self.running_mean: Optional[np.ndarray] = None
        self.running_var: Optional[np.ndarray] = None

    def __call__(self, x: Tensor, training: bool) -> Tensor:
        return batch_norm(x, self, training)


def batch_norm(x: Tensor, bn: BatchNorm, training: bool) -> Tensor:
    if x.shape[-1] != bn.channels:
        raise ShapeError(f"batch norm over {bn.channels} channels got input {x.shape}")
    xd = x.data
    axes = tuple(range(xd.ndim - 1))
    scale, shift = bn.scale, bn.shift
    if not training:
        if bn.running_mean is None:
            raise ContractError("batch norm used for inference before any running statistics were recorded")
        inv = 1.0 / np.sqrt(bn.running_var + bn.eps)
        xhat = (xd - bn.running_mean) * inv
        out = xhat * scale.data + shift.data

        def bw_infer(g):
            return g * scale.data * inv, (g * xhat).sum(axis=axes), g.sum(axis=axes)

        return _make(out, (x, scale, shift), bw_infer, "batch_norm")

    mu = xd.mean(axis=axes)
    var = xd.var(axis=axes)
    m = bn.momentum
    if bn.running_mean is None:
        bn.running_mean, bn.running_var = mu.copy(), var.copy()
    else:
        bn.running_mean = m * bn.running_mean + (1.0 - m) * mu
        bn.running_var = m * bn.running_var + (1.0 - m) * var
    inv = 1.0 / np.sqrt(var + bn.eps)
    xhat = (xd - mu) * inv
    out = xhat * scale.data + shift.data
    count = xd.size // xd.shape[-1]

    def bw(g):
        gxhat = g * scale.data
        gx = inv / count * (count * gxhat - gxhat.sum(axis=axes) - xhat * (gxhat * xhat).sum(axis=axes))
        return gx, (g * xhat).sum(axis=axes), g.sum(axis=axes)

    return _make(out, (x, scale, shift), bw, "batch_norm")


def dropout(x: Tensor, rate: float, training: bool, rng: Optional[np.random.Generator] = None) -> Tensor:
    """Inverted dropout: survivors are scaled by 1/(1-rate) at train time."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0.0:
        return x
    if rng is None:
        raise ContractError("training-mode dropout needs a random generator")
    keep = (rng.random(x.shape) >= rate).astype(x.data.dtype) / (1.0 - rate)
    return _make(x.data * keep, (x,), lambda g: (g * keep,), "dropout")


# ----------------------------------------------------------------------
# Gradient checking
# ----------------------------------------------------------------------


def numerical_grad(fn: Callable[[], float], target: np.ndarray, step: float = 1e-3,
                   coords: Optional[Iterable[tuple]] = None) -> np.ndarray:
    """Central differences of ``fn`` w.r.t. ``target`` (mutated in place and restored).

    With ``coords`` only those entries are probed; the rest stay zero.
    """
    grad = np.zeros_like(target)
    if coords is None:
        coords = itertools.product(*(range(s) for s in target.shape))
    for idx in coords:
        orig = target[idx]
        target[idx] = orig + step
        up = fn()
        target[idx] = orig - step
        down = fn()
        target[idx] = orig
        grad[idx] = (up - down) / (2.0 * step)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    denom = max(np.linalg.norm(analytic), np.linalg.norm(numeric))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(analytic - numeric) / denom)
