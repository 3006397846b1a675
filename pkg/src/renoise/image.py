"""Labeled raster images.

An ImageBuffer is a float64 (H, W, C) raster in nominal [0, 255] pixel
units, tagged with the role it plays in an experiment: the clean source,
the observed corrupted image, the re-corrupted training input, or a
denoised output. Samples are not clipped; clipping happens only when a
file is written.
"""

from __future__ import annotations

import numpy as np

from .exceptions import RoleError, SpecError

ROLE_CLEAN = "clean"
ROLE_OBSERVED = "observed"
ROLE_SIMULATED = "simulated"
ROLE_DENOISED = "denoised"
ROLES = (ROLE_CLEAN, ROLE_OBSERVED, ROLE_SIMULATED, ROLE_DENOISED)

MIN_DIM = 8


class ImageBuffer:
    __slots__ = ("data", "role", "meta")

    def __init__(self, data, role: str, meta: dict | None = None):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise SpecError(f"image must be (H, W) or (H, W, C) with C in (1, 3), got {arr.shape}")
        if arr.shape[0] < MIN_DIM or arr.shape[1] < MIN_DIM:
            raise SpecError(f"image dimensions must be >= {MIN_DIM}, got {arr.shape[:2]}")
        if not np.all(np.isfinite(arr)):
            raise SpecError("image contains non-finite samples")
        if role not in ROLES:
            raise RoleError(f"unknown image role {role!r}; expected one of {ROLES}")
        self.data = np.ascontiguousarray(arr)
        self.role = role
        self.meta = dict(meta) if meta else {}

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def require_role(self, role: str, what: str) -> "ImageBuffer":
        if self.role != role:
            raise RoleError(f"{what} requires a {role!r} image, got {self.role!r}")
        return self

    def derive(self, data, role: str, **meta) -> "ImageBuffer":
        """New buffer carrying this one's metadata plus ``meta``, in a new role."""
        merged = dict(self.meta)
        merged.update(meta)
        return ImageBuffer(data, role, merged)

    def gray(self) -> np.ndarray:
        """Single-channel view/copy using ITU-R BT.601 luma weights."""
        if self.channels == 1:
            return self.data[:, :, 0]
        r, g, b = self.data[:, :, 0], self.data[:, :, 1], self.data[:, :, 2]
        return 0.299 * r + 0.587 * g + 0.114 * b

    def __repr__(self) -> str:
        return f"ImageBuffer({self.height}x{self.width}x{self.channels}, role={self.role!r})"
