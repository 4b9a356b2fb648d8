"""Pre-norm self-attention encoder blocks built from the tape kernels."""

from __future__ import annotations

import numpy as np

from . import ops
from .params import ParameterStore
from .tensor import Tensor


def sinusoidal_at(positions, dim: int, dtype=np.float32) -> np.ndarray:
    """Sinusoidal encodings at arbitrary (possibly fractional) positions."""
    pos = np.asarray(positions, dtype=np.float64)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle)).astype(dtype)


def sinusoidal_positions(n: int, dim: int, dtype=np.float32) -> np.ndarray:
    return sinusoidal_at(np.arange(n), dim, dtype)


def init_block(store: ParameterStore, name: str, dim: int, ffn_dim: int, rng: np.random.Generator) -> None:
    """Pre-norm block parameters.

    The two projections that write into the residual stream start at zero, so
    a fresh block is the identity and each frame's embedding initially
    depends only on that frame.
    """
    store.norm(f"{name}.ln_attn", dim)
    for proj in ("q", "k", "v"):
        store.dense(f"{name}.attn.{proj}", dim, dim, rng)
    store.add(f"{name}.attn.o.w", np.zeros((dim, dim)))
    store.add(f"{name}.attn.o.b", np.zeros(dim))
    store.norm(f"{name}.ln_ffn", dim)
    store.dense(f"{name}.ffn.in", dim, ffn_dim, rng)
    store.add(f"{name}.ffn.out.w", np.zeros((ffn_dim, dim)))
    store.add(f"{name}.ffn.out.b", np.zeros(dim))


def self_attention(x: Tensor, params: ParameterStore, name: str, heads: int) -> Tensor:
    n, dim = x.shape
    dh = dim // heads

    def split(t: Tensor) -> Tensor:
        return ops.transpose(ops.reshape(t, (n, heads, dh)), (1, 0, 2))

    q = split(ops.linear(x, params[f"{name}.q.w"], params[f"{name}.q.b"]))
    k = split(ops.linear(x, params[f"{name}.k.w"], params[f"{name}.k.b"]))
    v = split(ops.linear(x, params[f"{name}.v.w"], params[f"{name}.v.b"]))
    scores = ops.mul(ops.matmul(q, ops.transpose(k, (0, 2, 1))), dh ** -0.5)
    ctx = ops.matmul(ops.softmax(scores, axis=-1), v)
    merged = ops.reshape(ops.transpose(ctx, (1, 0, 2)), (n, dim))
    return ops.linear(merged, params[f"{name}.o.w"], params[f"{name}.o.b"])


def encoder_block(x: Tensor, params: ParameterStore, name: str, heads: int) -> Tensor:
    h = ops.layer_norm(x, params[f"{name}.ln_attn.g"], params[f"{name}.ln_attn.b"])
    x = ops.add(x, self_attention(h, params, f"{name}.attn", heads))
    h = ops.layer_norm(x, params[f"{name}.ln_ffn.g"], params[f"{name}.ln_ffn.b"])
    h = ops.relu(ops.linear(h, params[f"{name}.ffn.in.w"], params[f"{name}.ffn.in.b"]))
    return ops.add(x, ops.linear(h, params[f"{name}.ffn.out.w"], params[f"{name}.ffn.out.b"]))


def encoder_stack(x: Tensor, params: ParameterStore, prefix: str, layers: int, heads: int) -> Tensor:
    for i in range(layers):
        x = encoder_block(x, params, f"{prefix}.block{i}", heads)
    return x
