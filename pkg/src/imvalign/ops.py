"""Differentiable kernels over :class:`~imvalign.tensor.Tensor`.

Every function computes its forward value with numpy and, when a tape is
active and some input requires a gradient, records a closure producing the
input gradients from the output gradient.
"""

from __future__ import annotations

import numpy as np

from .tensor import Parameter, Tensor, make_result


class DimensionError(ValueError):
    pass


class ConfigurationError(ValueError):
    pass


def _lift(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if isinstance(a, Tensor):
        return a, _lift(b, a)
    b = _lift(b)
    return _lift(a, b), b


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


# elementwise arithmetic -------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data + b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    sa, sb = a.shape, b.shape
    return make_result(a.data - b.data, (a, b),
                       lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)
    av, bv = a.data, b.data
    return make_result(av * bv, (a, b),
                       lambda g: (_unbroadcast(g * bv, av.shape), _unbroadcast(g * av, bv.shape)))


def div(a, b) -> Tensor:
    a, b = _pair(a, b)
    av, bv = a.data, b.data
    out = av / bv

    def backward(g):
        ga = g / bv
        return _unbroadcast(ga, av.shape), _unbroadcast(-ga * out, bv.shape)

    return make_result(out, (a, b), backward)


def neg(a: Tensor) -> Tensor:
    return make_result(-a.data, (a,), lambda g: (-g,))


def square(a: Tensor) -> Tensor:
    av = a.data
    return make_result(av * av, (a,), lambda g: (2.0 * av * g,))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return make_result(out, (a,), lambda g: (g * out,))


def abs(a: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    sign = np.sign(a.data)
    return make_result(np.abs(a.data), (a,), lambda g: (g * sign,))


def relu(a: Tensor) -> Tensor:
    """Elementwise max(x, 0); the subgradient at 0 is 0."""
    mask = a.data > 0
    return make_result(np.where(mask, a.data, 0).astype(a.dtype), (a,), lambda g: (g * mask,))


# shape manipulation -------------------------------------------------------------

def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    src = a.shape
    return make_result(a.data.reshape(shape), (a,), lambda g: (g.reshape(src),))


def transpose(a: Tensor, axes: tuple[int, ...] | None = None) -> Tensor:
    if axes is None:
        axes = tuple(reversed(range(a.ndim)))
    inv = tuple(np.argsort(axes))
    return make_result(np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def index(a: Tensor, key) -> Tensor:
    src_shape, dtype = a.shape, a.dtype

    def backward(g):
        full = np.zeros(src_shape, dtype=dtype)
        np.add.at(full, key, g)
        return (full,)

    return make_result(a.data[key], (a,), backward)


def concat(tensors: list[Tensor], axis: int = 0) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        return tuple(np.take(g, range(bounds[i], bounds[i + 1]), axis=axis)
                     for i in range(len(tensors)))

    return make_result(np.concatenate([t.data for t in tensors], axis=axis), tuple(tensors), backward)


def sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    src = a.shape

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src).copy(),)

    return make_result(np.asarray(a.data.sum(axis=axis, keepdims=keepdims)), (a,), backward)


def mean(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    n = a.data.size if axis is None else a.shape[axis]
    return div(sum(a, axis=axis, keepdims=keepdims), float(n))


# linear algebra ---------------------------------------------------------------

def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; rank-3 operands share a batch axis."""
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2] or a.shape[:-2] != b.shape[:-2]:
        raise DimensionError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    av, bv = a.data, b.data

    def backward(g):
        return g @ np.swapaxes(bv, -1, -2), np.swapaxes(av, -1, -2) @ g

    return make_result(av @ bv, (a, b), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


# normalisations -----------------------------------------------------------------

def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Max-stabilised softmax along ``axis``.

    Weights below the smallest normal float are flushed to zero: they carry
    no usable mass, and subnormal operands slow every later product down by
    several times (narrow reconstruction kernels produce many of them).
    """
    z = a.data - a.data.max(axis=axis, keepdims=True)
    # the normaliser is at most n, so e >= n * tiny keeps every output normal
    floor = np.log(np.finfo(z.dtype).tiny) + np.log(max(z.shape[axis], 1))
    e = np.zeros_like(z)
    np.exp(z, out=e, where=z > floor)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return make_result(out, (a,), backward)


def row_softmax(a: Tensor) -> Tensor:
    return softmax(a, axis=-1)


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    z = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def backward(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return make_result(out, (a,), backward)


def cumsum_last(a: Tensor) -> Tensor:
    """Inclusive cumulative sum along the last axis."""
    def backward(g):
        return (np.flip(np.cumsum(np.flip(g, -1), axis=-1), -1),)

    return make_result(np.cumsum(a.data, axis=-1), (a,), backward)


def layer_norm(a: Tensor, gain: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    gv = gain.data

    def backward(g):
        gx_hat = g * gv
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        red = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=red), g.sum(axis=red)

    return make_result(xhat * gv + bias.data, (a, gain, bias), backward)


# convolution --------------------------------------------------------------------

def conv1d_same(a: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Zero-padded cross-correlation over time: [T, c_in] * [k, c_in, c_out] -> [T, c_out]."""
    k, c_in, c_out = w.shape
    if k % 2 == 0:
        raise ConfigurationError(f"conv1d_same needs an odd kernel size, got {k}")
    T, c = a.shape
    if c != c_in:
        raise DimensionError(f"conv1d_same channel mismatch: input {c}, kernel {c_in}")
    pad = (k - 1) // 2
    xp = np.zeros((T + 2 * pad, c_in), dtype=a.dtype)
    xp[pad:pad + T] = a.data
    # cols[t] = concat(xp[t], xp[t+1], ..., xp[t+k-1])
    cols = np.concatenate([xp[i:i + T] for i in range(k)], axis=1)
    wm = w.data.reshape(k * c_in, c_out)
    out = cols @ wm + b.data

    def backward(g):
        gcols = g @ wm.T
        gxp = np.zeros_like(xp)
        for i in range(k):
            gxp[i:i + T] += gcols[:, i * c_in:(i + 1) * c_in]
        gw = (cols.T @ g).reshape(k, c_in, c_out)
        return gxp[pad:pad + T], gw, g.sum(axis=0)

    return make_result(out, (a, w, b), backward)


# lookups and losses ---------------------------------------------------------------

def embedding(table: Tensor, ids) -> Tensor:
    ids = np.asarray(ids, dtype=np.int64)
    V = table.shape[0]
    if ids.size and (ids.min() < 0 or ids.max() >= V):
        raise IndexError(f"token id out of range for vocabulary of size {V}")
    return index(table, ids)


def cross_entropy(logits: Tensor, targets, label_smoothing: float = 0.0) -> Tensor:
    """Mean over positions of -log softmax(logits)[target]."""
    targets = np.asarray(targets, dtype=np.int64)
    L, V = logits.shape
    if targets.shape != (L,):
        raise DimensionError(f"cross_entropy: {L} logit rows but {targets.shape} targets")
    if targets.size and (targets.min() < 0 or targets.max() >= V):
        raise IndexError(f"cross_entropy: target id out of range for {V} classes")
    z = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    q = np.full((L, V), label_smoothing / V, dtype=logits.dtype)
    q[np.arange(L), targets] += 1.0 - label_smoothing
    loss = -(q * logp).sum() / L

    def backward(g):
        return (g * (np.exp(logp) - q) / L,)

    return make_result(np.asarray(loss, dtype=logits.dtype), (logits,), backward)


def mse(a: Tensor, b) -> Tensor:
    a, b = _pair(a, b)
    if a.shape != b.shape:
        raise DimensionError(f"mse shape mismatch: {a.shape} vs {b.shape}")
    diff = a.data - b.data
    n = max(diff.size, 1)

    def backward(g):
        ga = g * 2.0 * diff / n
        return ga, -ga

    return make_result(np.asarray((diff * diff).sum() / n, dtype=a.dtype), (a, b), backward)


def stop_gradient(a: Tensor) -> Tensor:
    return Tensor(a.data.copy())


__all__ = [
    "ConfigurationError", "DimensionError", "Parameter",
    "abs", "add", "concat", "conv1d_same", "cross_entropy", "cumsum_last", "div",
    "embedding", "exp", "index", "layer_norm", "linear", "log_softmax", "matmul",
    "mean", "mse", "mul", "neg", "relu", "reshape", "row_softmax", "softmax",
    "square", "stop_gradient", "sub", "sum", "transpose",
]
