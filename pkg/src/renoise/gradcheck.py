"""Finite-difference verification of the engine's analytic gradients.

For each layer kind (and a composed multi-block network) the loss is a
fixed random linear functional of the forward output. Analytic parameter
and input gradients from backward() are compared against central
differences coordinate by coordinate on a deterministic sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .engine import BatchNorm2d, Conv2d, Network, NetworkConfig, ReLU, ResidualBlock
from .rng import child_rng

LAYER_KINDS = ("conv2d", "batch_norm", "relu", "residual_block")
DEFAULT_TOLERANCE = 1e-4


@dataclass
class GradCheckRow:
    target: str
    worst_relative_error: float
    coordinates_checked: int

    def to_json_dict(self) -> dict:
        return {"target": self.target,
                "worst_relative_error": self.worst_relative_error,
                "coordinates_checked": self.coordinates_checked}


def _relative_error(a: float, n: float) -> float:
    # Floor the scale at 1e-3: central differences resolve gradients only
    # down to ~1e-9 absolute here, so genuinely-zero gradients (e.g. a conv
    # bias feeding a BatchNorm) would otherwise compare FD noise to zero.
    scale = max(abs(a), abs(n), 1e-3)
    return abs(a - n) / scale


def _sample_coords(rng, shape, count):
    flat = rng.choice(np.prod(shape), size=min(count, int(np.prod(shape))), replace=False)
    return [np.unravel_index(int(i), shape) for i in flat]


def _check_function(forward, params, x, rng, coords_per_tensor=5, corrupt=False):
    """Compare analytic and numeric gradients of loss = sum(r * forward(x)).

    ``forward(x, train)`` must rerun the full train-mode computation;
    ``params`` is the list of engine Parameters to probe. Returns
    (worst relative error, coordinates checked).
    """
    out0 = forward(x, True)
    r = rng.standard_normal(out0.shape)

    def loss_value():
        return float(np.sum(r * forward(x, True)))

    # analytic pass
    forward(x, True)
    gin = _backward_of(forward, r)
    if corrupt and params:
        params[0].grad += 0.5
    worst = 0.0
    checked = 0

    def fd(arr, idx):
        orig = arr[idx]
        h = 1e-6 * max(1.0, abs(orig))
        arr[idx] = orig + h
        up = loss_value()
        arr[idx] = orig - h
        down = loss_value()
        arr[idx] = orig
        return (up - down) / (2.0 * h)

    for p in params:
        for idx in _sample_coords(rng, p.data.shape, coords_per_tensor):
            worst = max(worst, _relative_error(float(p.grad[idx]), fd(p.data, idx)))
            checked += 1
    for idx in _sample_coords(rng, x.shape, coords_per_tensor):
        worst = max(worst, _relative_error(float(gin[idx]), fd(x, idx)))
        checked += 1
    return worst, checked


_BACKWARD = {}


def _backward_of(forward, r):
    return _BACKWARD[forward](r)


def _layer_harness(layer, x_shape, seed):
    rng = child_rng(seed, "gradcheck", layer.kind)
    x = rng.standard_normal(x_shape)
    for p in layer.parameters():
        if p.name.endswith(".gamma"):
            p.data[:] = 1.0 + 0.1 * rng.standard_normal(p.data.shape)
        else:
            p.data[:] = rng.standard_normal(p.data.shape) * 0.5

    def forward(inp, train):
        return layer.forward(inp, train).copy()

    _BACKWARD[forward] = lambda g: layer.backward(g).copy()
    return forward, layer.parameters(), x, rng


def check_layer(kind: str, seed: int = 0, corrupt: bool = False) -> GradCheckRow:
    if kind == "conv2d":
        layer = Conv2d(3, 4, 3)
        forward, params, x, rng = _layer_harness(layer, (2, 3, 6, 6), seed)
    elif kind == "batch_norm":
        layer = BatchNorm2d(3)
        forward, params, x, rng = _layer_harness(layer, (2, 3, 6, 6), seed)
    elif kind == "relu":
        layer = ReLU()
        forward, params, x, rng = _layer_harness(layer, (2, 3, 6, 6), seed)
        # keep values away from the kink, where the derivative is not defined
        x[np.abs(x) < 1e-3] += 0.01
    elif kind == "residual_block":
        layer = ResidualBlock(4, 3)
        forward, params, x, rng = _layer_harness(layer, (2, 4, 6, 6), seed)
    else:
        raise ValueError(f"unknown layer kind {kind!r}")
    worst, checked = _check_function(forward, params, x, rng, corrupt=corrupt)
    return GradCheckRow(kind, worst, checked)


def check_composed(seed: int = 0, blocks: int = 3, corrupt: bool = False,
                   coords: int = 10) -> GradCheckRow:
    rng = child_rng(seed, "gradcheck", "composed")
    net = Network(NetworkConfig(blocks, 6, 3, 1)).init_random(rng)
    x = rng.standard_normal((2, 1, 8, 8))
    x[np.abs(x) < 1e-3] += 0.01

    def forward(inp, train):
        return net.forward_array(inp, train).copy()

    _BACKWARD[forward] = lambda g: net.backward_array(g).copy()
    params = list(net.parameters())
    probe = [params[i] for i in rng.choice(len(params), size=min(coords, len(params)), replace=False)]
    worst, checked = _check_function(forward, probe, x, rng, coords_per_tensor=2, corrupt=corrupt)
    return GradCheckRow(f"composed_{blocks}_blocks", worst, checked)


def check_all(seed: int = 0, corrupt: bool = False) -> list[GradCheckRow]:
    rows = [check_layer(kind, seed, corrupt=(corrupt and kind == "conv2d"))
            for kind in LAYER_KINDS]
    rows.append(check_composed(seed))
    return rows
