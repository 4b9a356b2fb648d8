"""Named parameter collection with initialisers and an access audit."""

from __future__ import annotations

from contextlib import contextmanager
from typing import Iterator

import numpy as np

from .tensor import Parameter


class ParameterStore:
    """Ordered ``name -> Parameter`` mapping.

    While :meth:`audit` is active every lookup is recorded, which lets tests
    prove that a code path never touches a given group of weights.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, Parameter] = {}
        self._accessed: set[str] | None = None

    def add(self, name: str, value: np.ndarray, trainable: bool = True) -> Parameter:
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        p = Parameter(np.array(value, dtype=self.dtype), name=name, trainable=trainable)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Parameter:
        if self._accessed is not None:
            self._accessed.add(name)
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def items(self):
        return self._params.items()

    def values(self):
        return self._params.values()

    def trainable(self) -> list[Parameter]:
        return [p for p in self._params.values() if p.trainable]

    def zero_grad(self) -> None:
        for p in self._params.values():
            p.grad = None

    def astype(self, dtype) -> None:
        self.dtype = np.dtype(dtype)
        for p in self._params.values():
            p.data = p.data.astype(self.dtype)
            p.grad = None

    @contextmanager
    def audit(self) -> Iterator[set[str]]:
        seen: set[str] = set()
        prev, self._accessed = self._accessed, seen
        try:
            yield seen
        finally:
            self._accessed = prev
            if prev is not None:
                prev.update(seen)

    # initialisers ---------------------------------------------------------

    def dense(self, name: str, fan_in: int, fan_out: int, rng: np.random.Generator) -> None:
        self.add(f"{name}.w", rng.normal(0.0, fan_in ** -0.5, size=(fan_in, fan_out)))
        self.add(f"{name}.b", np.zeros(fan_out))

    def norm(self, name: str, dim: int) -> None:
        self.add(f"{name}.g", np.ones(dim))
        self.add(f"{name}.b", np.zeros(dim))
