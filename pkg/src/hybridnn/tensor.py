"""Dense float32 tensor carried across module boundaries."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def as_f32(values, shape=None) -> np.ndarray:
    """Contiguous float32 array, reshaped if a shape is given."""
    arr = np.ascontiguousarray(values, dtype=np.float32)
    if shape is not None:
        arr = arr.reshape(shape)
    return arr


@dataclass
class Tensor:
    """Multi-dimensional float32 value with an optional gradient.

    data is stored row-major; grad, when present, matches data exactly in
    shape. All arithmetic in the package happens on the underlying arrays.
    """

    data: np.ndarray
    grad: np.ndarray | None = field(default=None)

    def __post_init__(self):
        self.data = as_f32(self.data)
        if self.grad is not None:
            self.grad = as_f32(self.grad)
            if self.grad.shape != self.data.shape:
                raise ValueError(
                    f"grad shape {self.grad.shape} != data shape {self.data.shape}"
                )

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return int(self.data.size)

    @classmethod
    def from_flat(cls, shape, values) -> "Tensor":
        flat = as_f32(values).reshape(-1)
        n = int(np.prod(shape)) if len(shape) else 1
        if flat.size != n:
            raise ValueError(f"{flat.size} values cannot fill shape {tuple(shape)}")
        return cls(flat.reshape(shape))
