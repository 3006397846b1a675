"""Layer vocabulary: conv2d, batch_norm, relu, residual_block.

Each layer owns its parameters and scratch buffers, computes its forward
map on raw float64 arrays, and backpropagates an upstream gradient while
accumulating parameter gradients. Buffers are reused across steps, keyed by
input shape, so steady-state training does no per-step allocation.
"""

from __future__ import annotations

import numpy as np

from ..exceptions import BackwardStateError, ShapeMismatchError, SpecError
from . import kernels


class Parameter:
    """Named value/gradient pair owned by a layer."""

    __slots__ = ("name", "data", "grad")

    def __init__(self, name: str, data: np.ndarray):
        self.name = name
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad = np.zeros_like(self.data)


class Layer:
    kind = "layer"

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def parameters(self) -> list[Parameter]:
        return []

    def _buf(self, name, shape) -> np.ndarray:
        store = self.__dict__.setdefault("_buffers", {})
        buf = store.get(name)
        if buf is None or buf.shape != shape:
            buf = np.empty(shape, dtype=np.float64)
            store[name] = buf
        return buf


class Conv2d(Layer):
    """Same-padding cross-correlation with per-channel bias.

    Odd kernel only; zero padding of (k - 1) / 2 keeps spatial extents.
    """

    kind = "conv2d"

    def __init__(self, in_channels: int, out_channels: int, kernel_size: int = 3, name: str = "conv"):
        if kernel_size % 2 != 1 or kernel_size < 1:
            raise SpecError(f"kernel size must be odd and positive, got {kernel_size}")
        if in_channels < 1 or out_channels < 1:
            raise SpecError("channel counts must be >= 1")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.pad = (kernel_size - 1) // 2
        self.weight = Parameter(f"{name}.weight", np.zeros((out_channels, in_channels, kernel_size, kernel_size)))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_channels))
        self._ctx_key = None

    def parameters(self):
        return [self.weight, self.bias]

    def _padded(self, x: np.ndarray, tag: str) -> np.ndarray:
        n, c, h, w = x.shape
        p = self.pad
        xp = self._buf(tag, (n, c, h + 2 * p, w + 2 * p))
        if p:
            xp[:, :, :p, :] = 0.0
            xp[:, :, -p:, :] = 0.0
            xp[:, :, :, :p] = 0.0
            xp[:, :, :, -p:] = 0.0
            xp[:, :, p:p + h, p:p + w] = x
        else:
            xp[:] = x
        return xp

    def _run(self, xp: np.ndarray, w: np.ndarray, bias: np.ndarray, out: np.ndarray) -> np.ndarray:
        if w.shape[2] == 3 and w.shape[3] == 3:
            return kernels.conv_forward_k3(xp, w, bias, out)
        return kernels.conv_forward_generic(xp, w, bias, out)

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ShapeMismatchError(
                "conv2d input", (x.shape[0], self.in_channels, x.shape[2], x.shape[3]), x.shape)
        n, _, h, w = x.shape
        tag = "xp_train" if train else "xp_eval"
        xp = self._padded(x, tag)
        out = self._buf("out_train" if train else "out_eval", (n, self.out_channels, h, w))
        self._run(xp, self.weight.data, self.bias.data, out)
        if train:
            self._ctx_key = (n, h, w)
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if self._ctx_key is None:
            raise BackwardStateError("conv2d backward without retained train-mode activations")
        n, h, w = self._ctx_key
        if gout.shape != (n, self.out_channels, h, w):
            raise ShapeMismatchError("conv2d output grad", (n, self.out_channels, h, w), gout.shape)
        xp = self._buffers["xp_train"]
        gout = np.ascontiguousarray(gout)
        if self.kernel_size == 3:
            kernels.conv_grad_weights_k3(xp, gout, self.weight.grad)
        else:
            kernels.conv_grad_weights_generic(xp, gout, self.weight.grad)
        np.sum(gout, axis=(0, 2, 3), out=self.bias.grad)
        # input grad: same-pad correlation of gout with spatially flipped,
        # channel-transposed weights
        gp = self._padded(gout, "gp")
        wt = np.ascontiguousarray(self.weight.data[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
        gin = self._buf("gin", (n, self.in_channels, h, w))
        zero_bias = self._buf("zb", (self.in_channels,))
        zero_bias[:] = 0.0
        self._run(gp, wt, zero_bias, gin)
        self._ctx_key = None
        return gin


class BatchNorm2d(Layer):
    """Per-channel normalization over (N, H, W) with scale and shift.

    Train mode uses batch statistics (biased variance) and updates running
    statistics with the given momentum; eval mode uses the running values.
    A zero-variance channel is stabilised by eps, never divided by zero.
    """

    kind = "batch_norm"

    def __init__(self, channels: int, momentum: float = 0.1, eps: float = 1e-8, name: str = "bn"):
        if channels < 1:
            raise SpecError("batch_norm channels must be >= 1")
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = Parameter(f"{name}.gamma", np.ones(channels))
        self.beta = Parameter(f"{name}.beta", np.zeros(channels))
        self.running_mean = np.zeros(channels)
        self.running_var = np.ones(channels)
        self._istd = None
        self._ctx_key = None

    def parameters(self):
        return [self.gamma, self.beta]

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.channels:
            raise ShapeMismatchError(
                "batch_norm input", (x.shape[0], self.channels, x.shape[2], x.shape[3]), x.shape)
        out = self._buf("out_train" if train else "out_eval", x.shape)
        if train:
            mean, var = kernels.bn_stats(x)
            self.running_mean += self.momentum * (mean - self.running_mean)
            self.running_var += self.momentum * (var - self.running_var)
            istd = 1.0 / np.sqrt(var + self.eps)
            xhat = self._buf("xhat", x.shape)
            kernels.bn_normalize(x, mean, istd, self.gamma.data, self.beta.data, xhat, out)
            self._istd = istd
            self._ctx_key = x.shape
        else:
            istd = 1.0 / np.sqrt(self.running_var + self.eps)
            scratch = self._buf("xhat_eval", x.shape)
            kernels.bn_normalize(x, self.running_mean, istd, self.gamma.data, self.beta.data, scratch, out)
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if self._ctx_key is None:
            raise BackwardStateError("batch_norm backward without retained train-mode activations")
        if gout.shape != self._ctx_key:
            raise ShapeMismatchError("batch_norm output grad", self._ctx_key, gout.shape)
        gin = self._buf("gin", gout.shape)
        kernels.bn_backward(np.ascontiguousarray(gout), self._buffers["xhat"],
                            self.gamma.data, self._istd, gin, self.gamma.grad, self.beta.grad)
        self._ctx_key = None
        return gin


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._ctx_key = None

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        out = self._buf("out_train" if train else "out_eval", x.shape)
        kernels.relu_forward(np.ascontiguousarray(x), out)
        if train:
            self._ctx_key = x.shape
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if self._ctx_key is None:
            raise BackwardStateError("relu backward without retained train-mode activations")
        if gout.shape != self._ctx_key:
            raise ShapeMismatchError("relu output grad", self._ctx_key, gout.shape)
        gin = self._buf("gin", gout.shape)
        kernels.relu_backward(np.ascontiguousarray(gout), self._buffers["out_train"], gin)
        self._ctx_key = None
        return gin


class ResidualBlock(Layer):
    """conv -> BN -> ReLU -> conv -> BN, plus identity skip."""

    kind = "residual_block"

    def __init__(self, channels: int, kernel_size: int = 3, name: str = "block"):
        self.channels = channels
        self.conv1 = Conv2d(channels, channels, kernel_size, name=f"{name}.conv1")
        self.bn1 = BatchNorm2d(channels, name=f"{name}.bn1")
        self.relu = ReLU()
        self.conv2 = Conv2d(channels, channels, kernel_size, name=f"{name}.conv2")
        self.bn2 = BatchNorm2d(channels, name=f"{name}.bn2")

    def parameters(self):
        return (self.conv1.parameters() + self.bn1.parameters()
                + self.conv2.parameters() + self.bn2.parameters())

    def forward(self, x: np.ndarray, train: bool) -> np.ndarray:
        h = self.conv1.forward(x, train)
        h = self.bn1.forward(h, train)
        h = self.relu.forward(h, train)
        h = self.conv2.forward(h, train)
        h = self.bn2.forward(h, train)
        out = self._buf("out_train" if train else "out_eval", x.shape)
        np.add(h, x, out=out)
        return out

    def backward(self, gout: np.ndarray) -> np.ndarray:
        g = self.bn2.backward(gout)
        g = self.conv2.backward(g)
        g = self.relu.backward(g)
        g = self.bn1.backward(g)
        g = self.conv1.backward(g)
        g += gout
        return g
