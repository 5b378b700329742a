"""Learnable parameters and the flat registry the optimizer walks.

Every tensor in the library is a dense 2-D float64 numpy array.  A Param
bundles the value with its gradient accumulator and the two Adam moment
buffers so the optimizer never has to keep side tables.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigError

# 2-D float64 array, row-major; rows = batch or vocab, cols = features/units.
Matrix = np.ndarray


class Param:
    """A named learnable tensor with gradient and Adam moment buffers."""

    __slots__ = ("name", "value", "grad", "m1", "m2", "step_count")

    def __init__(self, name: str, value: np.ndarray) -> None:
        value = np.ascontiguousarray(value, dtype=np.float64)
        if value.ndim != 2:
            raise ConfigError(f"param {name!r} must be 2-D, got shape {value.shape}")
        self.name = name
        self.value = value
        self.grad = np.zeros_like(value)
        self.m1 = np.zeros_like(value)
        self.m2 = np.zeros_like(value)
        self.step_count = 0

    @property
    def shape(self) -> tuple[int, int]:
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad[:] = 0.0

    def __repr__(self) -> str:
        return f"Param({self.name!r}, shape={self.value.shape})"


class ParamStore:
    """Insertion-ordered registry of uniquely named params.

    Creation order is deterministic and defines both the optimizer walk
    and the checkpoint blob order.
    """

    def __init__(self) -> None:
        self._params: dict[str, Param] = {}

    def create(self, name: str, value: np.ndarray) -> Param:
        if name in self._params:
            raise ConfigError(f"duplicate param name {name!r}")
        p = Param(name, value)
        self._params[name] = p
        return p

    def __getitem__(self, name: str) -> Param:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self):
        return iter(self._params.values())

    def __len__(self) -> int:
        return len(self._params)

    def names(self) -> list[str]:
        return list(self._params)

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.zero_grad()
