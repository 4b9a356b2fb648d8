"""Central-difference verification of tape gradients."""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .tensor import Tape, Tensor, no_grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-4) -> np.ndarray:
    """|a - n| / max(|a|, |n|, floor), elementwise.

    The floor keeps entries whose true gradient is ~0 from turning roundoff
    into a huge ratio.
    """
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def numeric_gradient(f: Callable[[], Tensor], param: Tensor, eps: float = 1e-6) -> np.ndarray:
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    gflat = grad.reshape(-1)
    with no_grad():
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(f().data)
            flat[i] = orig - eps
            down = float(f().data)
            flat[i] = orig
            gflat[i] = (up - down) / (2 * eps)
    return grad


def finite_diff_check(f: Callable[[], Tensor], params: Iterable[Tensor], eps: float = 1e-6,
                      floor: float = 1e-4) -> float:
    """Largest elementwise relative error between tape and central-difference gradients.

    ``f`` must rebuild its graph from ``params`` on every call and return a
    scalar.  Parameters must be 64-bit for the comparison to be meaningful.
    """
    params = list(params)
    for p in params:
        p.grad = None
        p.requires_grad = True
    with Tape() as tape:
        out = f()
    tape.backward(out)
    worst = 0.0
    for p in params:
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        numeric = numeric_gradient(f, p, eps)
        if analytic.size:
            worst = max(worst, float(relative_error(analytic, numeric, floor).max()))
    return worst
