"""Seeded parameter containers.

Initialization rule used throughout: each named tensor gets its own
SplitMix64 stream derived from ``(seed, name)`` and is filled in C order
with uniform draws on [-1/sqrt(fan_in), +1/sqrt(fan_in)].  Equal seeds give
bit-identical tensors, which is what lets the CLI ship parameters as a
seed-plus-hyperparameters JSON instead of a weight blob.
"""

from __future__ import annotations

import math
from typing import Iterator, Mapping

import numpy as np

from .errors import InvalidArgumentError
from .rng import Rng


def seeded_uniform(seed: int, name: str, shape: tuple, fan_in: int) -> np.ndarray:
    """Uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] tensor on a per-name stream."""
    if fan_in < 1:
        raise InvalidArgumentError(f"seeded_uniform: fan_in must be >= 1, got {fan_in}")
    bound = 1.0 / math.sqrt(fan_in)
    rng = Rng(seed).derive(name)
    arr = np.empty(shape)
    flat = arr.reshape(-1)
    for i in range(flat.size):
        flat[i] = rng.uniform(-bound, bound)
    return arr


class ParamBundle(Mapping[str, np.ndarray]):
    """Ordered name -> tensor mapping with seeded constructors.

    Tensors may be reassigned (``bundle["w"] = new``) so optimizer steps can
    write updates back; iteration order is insertion order.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._tensors: dict[str, np.ndarray] = {}

    def uniform(self, name: str, shape: tuple, fan_in: int) -> np.ndarray:
        self._tensors[name] = seeded_uniform(self.seed, name, tuple(shape), fan_in)
        return self._tensors[name]

    def zeros(self, name: str, shape: tuple) -> np.ndarray:
        self._tensors[name] = np.zeros(tuple(shape))
        return self._tensors[name]

    def identity(self, name: str, n: int) -> np.ndarray:
        self._tensors[name] = np.eye(n)
        return self._tensors[name]

    def __getitem__(self, name: str) -> np.ndarray:
        return self._tensors[name]

    def __setitem__(self, name: str, value) -> None:
        if name not in self._tensors:
            raise KeyError(f"unknown parameter {name!r}")
        arr = np.asarray(value, dtype=np.float64)
        if arr.shape != self._tensors[name].shape:
            raise InvalidArgumentError(
                f"parameter {name!r}: shape {arr.shape} != {self._tensors[name].shape}")
        self._tensors[name] = arr

    def __iter__(self) -> Iterator[str]:
        return iter(self._tensors)

    def __len__(self) -> int:
        return len(self._tensors)
