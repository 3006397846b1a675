"""Four-axis float64 tensor with an optional gradient companion.

Layout is (batch, channels, height, width), row-major. All engine layers
consume and produce this type; image buffers are converted at the pipeline
boundary.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import ShapeMismatchError, SpecError


class Tensor:
    """Dense NCHW array of finite 64-bit floats, plus an optional grad."""

    __slots__ = ("data", "grad")

    def __init__(self, data, grad=None, validate: bool = True):
        arr = np.ascontiguousarray(data, dtype=np.float64)
        if arr.ndim != 4:
            raise SpecError(f"tensor must have 4 axes (N, C, H, W), got {arr.ndim}")
        if validate:
            if min(arr.shape) < 1:
                raise SpecError(f"tensor extents must all be >= 1, got {arr.shape}")
            if not np.all(np.isfinite(arr)):
                raise SpecError("tensor contains non-finite elements")
        self.data = arr
        self.grad = None
        if grad is not None:
            self.set_grad(grad)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return self.data.shape

    def set_grad(self, grad) -> None:
        g = np.ascontiguousarray(grad, dtype=np.float64)
        if g.shape != self.data.shape:
            raise ShapeMismatchError("grad", self.data.shape, g.shape)
        self.grad = g

    def copy(self) -> "Tensor":
        t = Tensor(self.data.copy(), validate=False)
        if self.grad is not None:
            t.grad = self.grad.copy()
        return t

    def __repr__(self) -> str:
        return f"Tensor(shape={self.data.shape}, grad={'set' if self.grad is not None else 'none'})"


def as_batch(images: np.ndarray) -> Tensor:
    """Stack (H, W) or (H, W, C) arrays already shaped (N, H, W, C) into NCHW."""
    arr = np.asarray(images, dtype=np.float64)
    if arr.ndim != 4:
        raise SpecError(f"expected (N, H, W, C) stack, got {arr.shape}")
    return Tensor(np.ascontiguousarray(arr.transpose(0, 3, 1, 2)))
