"""Dense tensors with a reverse-mode tape.

A :class:`Tape` records every primitive applied while it is active; calling
:meth:`Tape.backward` on a scalar output walks the records in reverse and
accumulates gradients into ``Tensor.grad``.  Graphs are rebuilt on every
step, so nothing persists between tapes.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from typing import Callable, Iterator, Sequence

import numpy as np

_local = threading.local()


def _tape_stack() -> list:
    stack = getattr(_local, "tapes", None)
    if stack is None:
        stack = _local.tapes = []
    return stack


def active_tape() -> "Tape | None":
    stack = _tape_stack()
    if not stack or stack[-1] is None:
        return None
    return stack[-1]


class Tensor:
    """Array value plus an optional same-shape gradient plane."""

    __slots__ = ("data", "grad", "requires_grad")
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        arr = np.asarray(data, dtype=dtype)
        if arr.dtype.kind not in "f":
            arr = arr.astype(np.float64)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def __len__(self) -> int:
        return len(self.data)

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def numpy(self) -> np.ndarray:
        return self.data

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, dtype={self.dtype}, requires_grad={self.requires_grad})"

    # operator sugar; implementations live in ops
    def __add__(self, other):
        from . import ops
        return ops.add(self, other)

    def __radd__(self, other):
        from . import ops
        return ops.add(other, self)

    def __sub__(self, other):
        from . import ops
        return ops.sub(self, other)

    def __rsub__(self, other):
        from . import ops
        return ops.sub(other, self)

    def __mul__(self, other):
        from . import ops
        return ops.mul(self, other)

    def __rmul__(self, other):
        from . import ops
        return ops.mul(other, self)

    def __truediv__(self, other):
        from . import ops
        return ops.div(self, other)

    def __neg__(self):
        from . import ops
        return ops.neg(self)

    def __matmul__(self, other):
        from . import ops
        return ops.matmul(self, other)

    def __getitem__(self, index):
        from . import ops
        return ops.index(self, index)

    @property
    def T(self) -> "Tensor":
        from . import ops
        return ops.transpose(self)


class Parameter(Tensor):
    """A named, optionally trainable leaf tensor."""

    __slots__ = ("name", "trainable")

    def __init__(self, data, name: str, trainable: bool = True, dtype=None):
        super().__init__(data, requires_grad=trainable, dtype=dtype)
        self.name = name
        self.trainable = trainable

    def __repr__(self) -> str:
        return f"Parameter({self.name!r}, shape={self.shape}, trainable={self.trainable})"


BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tape:
    """Ordered record of primitive applications for one forward pass."""

    def __init__(self) -> None:
        self.records: list[tuple[Tensor, tuple[Tensor, ...], BackwardFn]] = []

    def __enter__(self) -> "Tape":
        _tape_stack().append(self)
        return self

    def __exit__(self, *exc) -> None:
        _tape_stack().pop()

    def __len__(self) -> int:
        return len(self.records)

    def record(self, out: Tensor, parents: tuple[Tensor, ...], backward_fn: BackwardFn) -> None:
        self.records.append((out, parents, backward_fn))

    def backward(self, loss: Tensor, seed: np.ndarray | None = None) -> None:
        if seed is None:
            if loss.data.size != 1:
                raise ValueError(f"backward needs a scalar output, got shape {loss.shape}")
            seed = np.ones_like(loss.data)
        loss.grad = seed if loss.grad is None else loss.grad + seed
        for out, parents, fn in reversed(self.records):
            if out.grad is None:
                continue
            grads = fn(out.grad)
            for parent, g in zip(parents, grads):
                if g is None or not parent.requires_grad:
                    continue
                if parent.grad is None:
                    parent.grad = np.array(g, dtype=parent.data.dtype, copy=True)
                else:
                    parent.grad += g


@contextmanager
def no_grad() -> Iterator[None]:
    """Suspend recording: ops inside run forward only."""
    stack = _tape_stack()
    stack.append(None)
    try:
        yield
    finally:
        stack.pop()


def make_result(data: np.ndarray, parents: tuple[Tensor, ...], backward_fn: BackwardFn) -> Tensor:
    tape = active_tape()
    out = Tensor(data)
    if tape is not None and any(p.requires_grad for p in parents):
        out.requires_grad = True
        tape.record(out, parents, backward_fn)
    return out


def as_tensor(x, dtype=None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    return Tensor(np.asarray(x, dtype=dtype))
