"""First-order optimisers over a ParameterStore."""

from __future__ import annotations

import numpy as np

from .params import ParameterStore


def clip_grad_norm(store: ParameterStore, max_norm: float) -> float:
    grads = [p.grad for p in store.trainable() if p.grad is not None]
    norm = float(np.sqrt(sum(float((g.astype(np.float64) ** 2).sum()) for g in grads)))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / (norm + 1e-12)
        for g in grads:
            g *= scale
    return norm


class SGD:
    kind = "sgd"

    def __init__(self, store: ParameterStore, lr: float = 1e-2):
        self.store = store
        self.lr = lr
        self.step_count = 0

    def step(self) -> None:
        self.step_count += 1
        for p in self.store.trainable():
            if p.grad is not None:
                p.data -= self.lr * p.grad

    def state(self) -> dict[str, np.ndarray]:
        return {"step": np.array([self.step_count], dtype=np.float32)}

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.step_count = int(state["step"][0])


class Adam:
    kind = "adam"

    def __init__(self, store: ParameterStore, lr: float = 1e-3, betas=(0.9, 0.999), eps: float = 1e-8):
        self.store = store
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in store.items() if p.trainable}
        self.v = {name: np.zeros_like(p.data) for name, p in store.items() if p.trainable}

    def step(self) -> None:
        self.step_count += 1
        t = self.step_count
        c1 = 1.0 - self.b1 ** t
        c2 = 1.0 - self.b2 ** t
        for name, p in self.store.items():
            if not p.trainable or p.grad is None:
                continue
            g = p.grad
            m, v = self.m[name], self.v[name]
            m *= self.b1
            m += (1.0 - self.b1) * g
            v *= self.b2
            v += (1.0 - self.b2) * g * g
            p.data -= (self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.data.dtype)

    def state(self) -> dict[str, np.ndarray]:
        out = {"step": np.array([self.step_count], dtype=np.float32)}
        for name in self.m:
            out[f"m.{name}"] = self.m[name]
            out[f"v.{name}"] = self.v[name]
        return out

    def load_state(self, state: dict[str, np.ndarray]) -> None:
        self.step_count = int(state["step"][0])
        for name in self.m:
            self.m[name] = np.array(state[f"m.{name}"], dtype=self.m[name].dtype)
            self.v[name] = np.array(state[f"v.{name}"], dtype=self.v[name].dtype)


def make_optimizer(kind: str, store: ParameterStore, lr: float):
    if kind == "adam":
        return Adam(store, lr=lr)
    if kind == "sgd":
        return SGD(store, lr=lr)
    raise ValueError(f"unknown optimizer {kind!r}")
