"""Residual denoising network: head conv, N residual blocks, tail conv."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from ..exceptions import ShapeMismatchError, SpecError
from .layers import Conv2d, Parameter, ResidualBlock
from .tensor import Tensor


@dataclass(frozen=True)
class NetworkConfig:
    num_residual_blocks: int = 10
    hidden_channels: int = 32
    kernel_size: int = 3
    input_channels: int = 1

    def validate(self) -> "NetworkConfig":
        if self.num_residual_blocks < 0:
            raise SpecError(f"num_residual_blocks must be >= 0, got {self.num_residual_blocks}")
        if self.hidden_channels < 1:
            raise SpecError(f"hidden_channels must be >= 1, got {self.hidden_channels}")
        if self.kernel_size % 2 != 1 or self.kernel_size < 1:
            raise SpecError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.input_channels not in (1, 3):
            raise SpecError(f"input_channels must be 1 or 3, got {self.input_channels}")
        return self


class Network:
    """Ordered layer stack; evaluating it applies the learned image map."""

    def __init__(self, config: NetworkConfig):
        self.config = config.validate()
        c = config.hidden_channels
        k = config.kernel_size
        self.head = Conv2d(config.input_channels, c, k, name="head")
        self.blocks = [ResidualBlock(c, k, name=f"block{i}")
                       for i in range(config.num_residual_blocks)]
        self.tail = Conv2d(c, config.input_channels, k, name="tail")
        self._layers = [self.head, *self.blocks, self.tail]

    # -- parameters ---------------------------------------------------------

    def parameters(self) -> list[Parameter]:
        out = []
        for layer in self._layers:
            out.extend(layer.parameters())
        return out

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad[:] = 0.0

    def checksum(self) -> str:
        h = hashlib.sha256()
        for p in self.parameters():
            h.update(p.data.tobytes())
        return h.hexdigest()

    def init_random(self, rng: np.random.Generator, output_scale: float = 0.1) -> "Network":
        """Conv weights ~ N(0, 2/fan_in), zero biases, unit BN scale.

        The tail conv is additionally scaled by ``output_scale`` so the
        freshly initialised network starts near the zero map instead of
        amplifying its features; for a regression target this removes the
        early epochs otherwise spent collapsing the output magnitude.
        """
        for p in self.parameters():
            if p.name.endswith(".weight"):
                fan_in = p.data[0].size
                p.data[:] = rng.standard_normal(p.data.shape) * np.sqrt(2.0 / fan_in)
            elif p.name.endswith(".gamma"):
                p.data[:] = 1.0
            else:
                p.data[:] = 0.0
        self.tail.weight.data *= output_scale
        return self

    def init_identity(self) -> "Network":
        """Exact identity map. Only the block-free head->tail stack supports it."""
        if self.blocks:
            raise SpecError("identity initialization requires num_residual_blocks == 0")
        if self.config.hidden_channels < self.config.input_channels:
            raise SpecError("identity initialization needs hidden_channels >= input_channels")
        mid = self.config.kernel_size // 2
        for conv in (self.head, self.tail):
            conv.weight.data[:] = 0.0
            conv.bias.data[:] = 0.0
        for c in range(self.config.input_channels):
            self.head.weight.data[c, c, mid, mid] = 1.0
            self.tail.weight.data[c, c, mid, mid] = 1.0
        return self

    # -- evaluation ---------------------------------------------------------

    def forward_array(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.config.input_channels:
            raise ShapeMismatchError(
                "network input",
                (x.shape[0] if x.ndim == 4 else -1, self.config.input_channels, -1, -1),
                x.shape)
        h = np.ascontiguousarray(x, dtype=np.float64)
        for layer in self._layers:
            h = layer.forward(h, train)
        return h

    def forward(self, x: Tensor, train: bool = False) -> Tensor:
        return Tensor(self.forward_array(x.data, train).copy(), validate=False)

    def backward_array(self, output_grad: np.ndarray) -> np.ndarray:
        g = np.ascontiguousarray(output_grad, dtype=np.float64)
        for layer in reversed(self._layers):
            g = layer.backward(g)
        return g

    def backward(self, output_grad) -> Tensor:
        g = output_grad.data if isinstance(output_grad, Tensor) else output_grad
        return Tensor(self.backward_array(g).copy(), validate=False)
