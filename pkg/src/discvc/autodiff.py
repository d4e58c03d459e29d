"""Dense tensors with reverse-mode automatic differentiation.

Small, CPU-only, numpy-backed. Arrays are float32; reductions accumulate in
float64 and a reduction that collapses to a scalar *stays* float64, which is
what keeps finite-difference checks of loss graphs meaningful at 32-bit.

The graph is dynamic: every op records its parent tensors and a closure that
maps the upstream gradient to per-parent gradients. ``Tensor.backward()``
topologically sorts the recorded nodes and visits each exactly once. Every
forward op validates that its output is finite and raises ``NonFiniteError``
otherwise.

Convolutions accept either (C, T) or batched (B, C, T) inputs; matmul accepts
leading broadcast dimensions. Everything else is elementwise or reduction
with numpy broadcasting semantics.
"""

from __future__ import annotations

from typing import Iterable, Sequence

import numpy as np

from .errors import ConfigurationError, DimensionError, NonFiniteError, UsageError

DTYPE = np.float32


def _check_finite(data: np.ndarray, op: str) -> None:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite values in output of '{op}'")


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    """Reduce a broadcast gradient back to the operand's shape."""
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad


class Tensor:
    """A numpy array plus the bookkeeping needed for reverse-mode autodiff."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward_fn", "_op")

    def __init__(self, data, requires_grad: bool = False, dtype=DTYPE, op: str = "leaf"):
        arr = np.asarray(data, dtype=dtype) if dtype is not None else np.asarray(data)
        _check_finite(arr, op)
        self.data = arr
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple = ()
        self._backward_fn = None
        self._op = op

    # -- construction ------------------------------------------------------

    @staticmethod
    def _from_op(data: np.ndarray, parents: Sequence["Tensor"], backward_fn, op: str) -> "Tensor":
        _check_finite(data, op)
        out = Tensor.__new__(Tensor)
        out.data = data
        out.grad = None
        out._op = op
        if any(p.requires_grad for p in parents):
            out.requires_grad = True
            out._parents = tuple(parents)
            out._backward_fn = backward_fn
        else:
            out.requires_grad = False
            out._parents = ()
            out._backward_fn = None
        return out

    # -- basic introspection -----------------------------------------------

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def item(self) -> float:
        return float(self.data)

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, op={self._op!r}, requires_grad={self.requires_grad})"

    # -- autodiff ----------------------------------------------------------

    def backward(self) -> None:
        """Reverse-mode sweep from a scalar; fills ``grad`` on every tensor
        that requires grad and contributed to this value."""
        if self.data.size != 1:
            raise UsageError("backward() requires a scalar loss")
        _check_finite(self.data, "backward seed")
        order = self._topo_order()
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward_fn is None or node.grad is None:
                continue
            grads = node._backward_fn(node.grad)
            for parent, g in zip(node._parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                g = _unbroadcast(np.asarray(g), parent.data.shape)
                if g.dtype != parent.data.dtype:
                    g = g.astype(parent.data.dtype)
                if parent.grad is None:
                    # defensive copy when the op passed its upstream grad
                    # through (add/reshape views would otherwise alias)
                    parent.grad = g.copy() if (g is node.grad or g.base is not None) else g
                else:
                    parent.grad += g

    def _topo_order(self):
        order, visited, stack = [], set(), [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        return order

    def zero_grad(self) -> None:
        self.grad = None

    # -- operator sugar ------------------------------------------------------

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
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis=axis, keepdims=keepdims)

    def mean(self, axis=None, keepdims=False):
        return tmean(self, axis=axis, keepdims=keepdims)

    def reshape(self, *shape):
        return reshape(self, *shape)


def _coerce(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, (int, float)):
        # python scalars keep the other operand's dtype under numpy promotion
        return Tensor(np.asarray(x, dtype=np.float64), dtype=None, op="const")
    return Tensor(np.asarray(x), dtype=None, op="const")


def constant(data, dtype=DTYPE) -> Tensor:
    """Non-trainable tensor (conditioning inputs, targets, masks)."""
    return Tensor(data, requires_grad=False, dtype=dtype, op="const")


def parameter(data, dtype=DTYPE) -> Tensor:
    return Tensor(data, requires_grad=True, dtype=dtype, op="param")


# -- elementwise arithmetic ---------------------------------------------------


def add(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        return Tensor._from_op(a.data + b, (a,), lambda g: (g,), "add")
    a, b = _coerce(a), _coerce(b)
    return Tensor._from_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        return Tensor._from_op(a.data - b, (a,), lambda g: (g,), "sub")
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        return Tensor._from_op(a - b.data, (b,), lambda g: (-g,), "sub")
    a, b = _coerce(a), _coerce(b)
    return Tensor._from_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        return Tensor._from_op(a.data * b, (a,), lambda g: (g * b,), "mul")
    a, b = _coerce(a), _coerce(b)
    ad, bd = a.data, b.data
    return Tensor._from_op(ad * bd, (a, b), lambda g: (g * bd, g * ad), "mul")


def div(a, b) -> Tensor:
    if isinstance(b, (int, float)) and isinstance(a, Tensor):
        inv = 1.0 / b
        return Tensor._from_op(a.data * inv, (a,), lambda g: (g * inv,), "div")
    if isinstance(a, (int, float)) and isinstance(b, Tensor):
        bd = b.data
        out = a / bd
        return Tensor._from_op(out, (b,), lambda g: (-g * out / bd,), "div")
    a, b = _coerce(a), _coerce(b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bwd(g):
        return (g / bd, -g * ad / (bd * bd))

    return Tensor._from_op(out, (a, b), bwd, "div")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(x.data)  # non-positive inputs surface as NonFiniteError
    xd = x.data
    return Tensor._from_op(out, (x,), lambda g: (g / xd,), "log")


def sqrt(x: Tensor) -> Tensor:
    out = np.sqrt(x.data)
    return Tensor._from_op(out, (x,), lambda g: (g * (0.5 / out),), "sqrt")


def absolute(x: Tensor) -> Tensor:
    sign = np.sign(x.data)
    return Tensor._from_op(np.abs(x.data), (x,), lambda g: (g * sign,), "abs")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._from_op(np.where(mask, x.data, 0), (x,), lambda g: (g * mask,), "relu")


def clamp(x: Tensor, lo: float, hi: float) -> Tensor:
    """Elementwise clip; gradient passes only strictly inside (lo, hi)."""
    if not lo < hi:
        raise ConfigurationError(f"clamp bounds must satisfy lo < hi, got [{lo}, {hi}]")
    mask = (x.data > lo) & (x.data < hi)
    return Tensor._from_op(np.clip(x.data, lo, hi), (x,), lambda g: (g * mask,), "clamp")


# -- reductions ---------------------------------------------------------------


def tsum(x: Tensor, axis=None, keepdims=False) -> Tensor:
    out = np.sum(x.data, axis=axis, keepdims=keepdims, dtype=np.float64)
    if out.ndim > 0:
        out = out.astype(x.data.dtype)
    shape, dtype = x.data.shape, x.data.dtype
    if axis is None:
        axes = None
    else:
        raw = axis if isinstance(axis, tuple) else (axis,)
        axes = tuple(sorted(a % len(shape) for a in raw))

    def bwd(g):
        if axes is not None and not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).astype(dtype),)

    return Tensor._from_op(out, (x,), bwd, "sum")


def tmean(x: Tensor, axis=None, keepdims=False) -> Tensor:
    if axis is None:
        count = x.data.size
    else:
        axes = axis if isinstance(axis, tuple) else (axis,)
        count = int(np.prod([x.data.shape[a] for a in axes]))
    s = tsum(x, axis=axis, keepdims=keepdims)
    return mul(s, 1.0 / count)


# -- shape manipulation -------------------------------------------------------


def reshape(x: Tensor, *shape) -> Tensor:
    if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
        shape = tuple(shape[0])
    old = x.data.shape
    return Tensor._from_op(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),), "reshape")


def broadcast_to(x: Tensor, shape) -> Tensor:
    shape = tuple(shape)
    out = np.broadcast_to(x.data, shape)
    return Tensor._from_op(np.ascontiguousarray(out), (x,), lambda g: (g,), "broadcast_to")


def concat(tensors: Iterable[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    if not tensors:
        raise UsageError("concat of zero tensors")
    out = np.concatenate([t.data for t in tensors], axis=axis)
    sizes = [t.data.shape[axis] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return tuple(np.split(g, splits, axis=axis))

    return Tensor._from_op(out, tensors, bwd, "concat")


# -- linear algebra -----------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _coerce(a), _coerce(b)
    if a.data.ndim < 2 or b.data.ndim < 2:
        raise DimensionError("matmul requires tensors of rank >= 2")
    if a.data.shape[-1] != b.data.shape[-2]:
        raise DimensionError(
            f"matmul inner dimensions disagree: {a.data.shape} @ {b.data.shape}"
        )
    ad, bd = a.data, b.data
    out = np.matmul(ad, bd)

    def bwd(g):
        ga = np.matmul(g, bd.swapaxes(-1, -2))
        gb = np.matmul(ad.swapaxes(-1, -2), g)
        return (ga, gb)

    return Tensor._from_op(out, (a, b), bwd, "matmul")


def embedding(table: Tensor, indices) -> Tensor:
    """Rows of a trainable matrix: indices (B,) int -> (B, D)."""
    idx = np.asarray(indices)
    if idx.min() < 0 or idx.max() >= table.data.shape[0]:
        raise DimensionError("embedding index out of range")
    out = table.data[idx]
    n_rows = table.data.shape[0]

    def bwd(g):
        gt = np.zeros((n_rows,) + table.data.shape[1:], dtype=g.dtype)
        np.add.at(gt, idx, g)
        return (gt,)

    return Tensor._from_op(out, (table,), bwd, "embedding")


# -- convolution --------------------------------------------------------------


def _conv_cols(xp: np.ndarray, kernel: int, stride: int, t_out: int) -> np.ndarray:
    """im2col for (B, C, Tp) -> (C*K, B*t_out)."""
    b, c, _ = xp.shape
    cols = np.empty((c * kernel, b * t_out), dtype=xp.dtype)
    span = stride * (t_out - 1) + 1
    for j in range(kernel):
        sl = xp[:, :, j : j + span : stride]
        cols[j * c : (j + 1) * c] = sl.transpose(1, 0, 2).reshape(c, b * t_out)
    return cols


def conv1d(x: Tensor, w: Tensor, stride: int = 1, pad: int = 0) -> Tensor:
    """Cross-correlation along time.

    x: (C_in, T) or (B, C_in, T); w: (C_out, C_in, K). Output (.., C_out, T')
    with T' = (T + 2*pad - K)//stride + 1.
    """
    if stride < 1 or pad < 0:
        raise ConfigurationError("conv1d requires stride >= 1 and pad >= 0")
    single = x.data.ndim == 2
    xd = x.data[None] if single else x.data
    if xd.ndim != 3 or w.data.ndim != 3:
        raise DimensionError("conv1d expects (B,C,T)/(C,T) input and (O,C,K) kernel")
    b, c_in, t = xd.shape
    c_out, c_w, k = w.data.shape
    if c_w != c_in:
        raise DimensionError(f"conv1d channel mismatch: input {c_in}, kernel {c_w}")
    t_out = (t + 2 * pad - k) // stride + 1
    if t_out < 1:
        raise DimensionError(f"conv1d output length {t_out} < 1 (T={t}, K={k}, pad={pad})")

    xp = np.pad(xd, ((0, 0), (0, 0), (pad, pad))) if pad else xd
    cols = _conv_cols(xp, k, stride, t_out)
    w_flat = w.data.transpose(0, 2, 1).reshape(c_out, c_in * k)  # (O, C*K), K-major rows
    out = (w_flat @ cols).reshape(c_out, b, t_out).transpose(1, 0, 2)
    tp = xp.shape[2]
    span = stride * (t_out - 1) + 1

    def bwd(g):
        if g.ndim == 2:
            g = g[None]
        g_mat = np.ascontiguousarray(g.transpose(1, 0, 2)).reshape(c_out, b * t_out)
        gw = (g_mat @ cols.T).reshape(c_out, k, c_in).transpose(0, 2, 1)
        gcols = w_flat.T @ g_mat  # (C*K, B*t_out)
        gxp = np.zeros((b, c_in, tp), dtype=g.dtype)
        for j in range(k):
            chunk = gcols[j * c_in : (j + 1) * c_in].reshape(c_in, b, t_out).transpose(1, 0, 2)
            gxp[:, :, j : j + span : stride] += chunk
        gx = gxp[:, :, pad : tp - pad] if pad else gxp
        return (gx[0] if single else gx, gw)

    out_t = out[0] if single else out
    return Tensor._from_op(np.ascontiguousarray(out_t), (x, w), bwd, "conv1d")


# -- normalization and softmax ------------------------------------------------

LAYER_NORM_EPS = 1e-5


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each time frame over channels to zero mean / unit variance,
    then apply a per-channel affine. x: (C, T) or (B, C, T)."""
    ax = x.data.ndim - 2  # channel axis
    if x.data.ndim not in (2, 3):
        raise DimensionError("layer_norm expects (C,T) or (B,C,T)")
    c = x.data.shape[ax]
    if gain.data.shape != (c,) or bias.data.shape != (c,):
        raise DimensionError("layer_norm gain/bias must be (C,)")
    gshape = (c, 1) if x.data.ndim == 2 else (1, c, 1)
    mu = x.data.mean(axis=ax, keepdims=True)
    centered = x.data - mu
    var = np.mean(centered * centered, axis=ax, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    gd = gain.data.reshape(gshape)
    out = xhat * gd + bias.data.reshape(gshape)

    def bwd(g):
        sum_axes = tuple(i for i in range(g.ndim) if i != ax)
        g_gain = (g * xhat).sum(axis=sum_axes)
        g_bias = g.sum(axis=sum_axes)
        gx_hat = g * gd
        m1 = gx_hat.mean(axis=ax, keepdims=True)
        m2 = (gx_hat * xhat).mean(axis=ax, keepdims=True)
        gx = inv_std * (gx_hat - m1 - xhat * m2)
        return (gx.astype(x.data.dtype), g_gain, g_bias)

    return Tensor._from_op(out, (x, gain, bias), bwd, "layer_norm")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        dot = (g * out).sum(axis=axis, keepdims=True)
        return (out * (g - dot),)

    return Tensor._from_op(out, (x,), bwd, "softmax")


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    ls = z - np.log(np.exp(z).sum(axis=axis, keepdims=True))

    def bwd(g):
        return (g - np.exp(ls) * g.sum(axis=axis, keepdims=True),)

    return Tensor._from_op(ls, (x,), bwd, "log_softmax")


GUMBEL_EPS = 1e-10


def gumbel_noise(shape, rng: np.random.Generator) -> np.ndarray:
    """Standard Gumbel draws, clipped away from 0/1 to avoid infinities."""
    u = rng.uniform(GUMBEL_EPS, 1.0 - GUMBEL_EPS, size=shape)
    return (-np.log(-np.log(u))).astype(DTYPE)


def gumbel_softmax(logits: Tensor, tau: float, rng: np.random.Generator, axis: int = -2) -> Tensor:
    """Sample a relaxed one-hot per column: softmax((logits + gumbel)/tau).

    Differentiable w.r.t. logits; the noise is a constant of the graph. The
    default axis -2 treats (.., K, T) inputs as K categories per time frame.
    """
    if tau <= 0:
        raise ConfigurationError(f"gumbel_softmax temperature must be > 0, got {tau}")
    noise = gumbel_noise(logits.data.shape, rng)
    return softmax(mul(add(logits, constant(noise)), 1.0 / tau), axis=axis)


def backward(loss: Tensor) -> None:
    """Module-level alias for ``loss.backward()``."""
    loss.backward()
