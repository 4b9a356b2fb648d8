"""Alignment predictor: per-frame advance estimated from acoustic embeddings alone."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ops
from .params import ParameterStore
from .tensor import Tensor

PREFIX = "predictor"


@dataclass(frozen=True)
class PredictorConfig:
    kernel_size: int = 3
    hidden_channels: int | None = None  # defaults to the embedding width
    layers: int = 2

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ops.ConfigurationError(f"predictor kernel_size must be odd, got {self.kernel_size}")
        if self.layers != 2:
            raise ops.ConfigurationError("the predictor stack has exactly 2 conv layers")


@dataclass(frozen=True)
class PredictedAlignment:
    delta_star: Tensor
    predicted_length: int


def init_predictor(store: ParameterStore, dim: int, cfg: PredictorConfig,
                   rng: np.random.Generator, head_bias: float = 0.1) -> None:
    hidden = cfg.hidden_channels or dim
    c_in = dim
    for i in range(cfg.layers):
        k = cfg.kernel_size
        store.add(f"{PREFIX}.conv{i}.w", rng.normal(0.0, (k * c_in) ** -0.5, size=(k, c_in, hidden)))
        store.add(f"{PREFIX}.conv{i}.b", np.zeros(hidden))
        store.norm(f"{PREFIX}.ln{i}", hidden)
        c_in = hidden
    # zero weights + positive bias: every frame starts on the live side of the output ReLU
    store.add(f"{PREFIX}.proj.w", np.zeros((hidden, 1)))
    store.add(f"{PREFIX}.proj.b", np.full(1, head_bias))


def predictor_forward(e_s: Tensor, cfg: PredictorConfig, params: ParameterStore) -> Tensor:
    """(conv -> layer norm -> relu) x 2, then a 1-channel projection and relu: [T, d] -> [T]."""
    h = e_s
    for i in range(cfg.layers):
        h = ops.conv1d_same(h, params[f"{PREFIX}.conv{i}.w"], params[f"{PREFIX}.conv{i}.b"])
        h = ops.layer_norm(h, params[f"{PREFIX}.ln{i}.g"], params[f"{PREFIX}.ln{i}.b"])
        h = ops.relu(h)
    out = ops.linear(h, params[f"{PREFIX}.proj.w"], params[f"{PREFIX}.proj.b"])
    return ops.relu(ops.reshape(out, (e_s.shape[0],)))


def predict_length(delta_star: Tensor | np.ndarray) -> int:
    """round(sum(delta*)) + 1, floored at 1.

    Scaled positions run over token indices 0..L-1, so the accumulated
    advance estimates L - 1.
    """
    total = float(np.sum(delta_star.data if isinstance(delta_star, Tensor) else delta_star))
    return max(1, int(np.floor(total + 0.5)) + 1)


def alignment_loss(delta_star: Tensor, delta: Tensor) -> Tensor:
    """MSE against the generator's delta, which is detached from its graph."""
    if delta_star.shape != delta.shape:
        raise ops.DimensionError(f"alignment length mismatch: {delta_star.shape} vs {delta.shape}")
    return ops.mse(delta_star, ops.stop_gradient(delta))
