"""Reverse-mode gradients versus central finite differences."""

import numpy as np
import pytest

from renoise.engine import BatchNorm2d, Conv2d, Network, NetworkConfig, ReLU, ResidualBlock, l2_loss
from renoise.exceptions import BackwardStateError, ShapeMismatchError

from _reference import central_difference, rel_err


def _loss_through(layer_forward, r):
    return float(np.sum(r * layer_forward()))


class TestConvBackward:
    def test_zero_output_grad_gives_zero_param_grads(self):
        rng = np.random.default_rng(0)
        conv = Conv2d(2, 3, 3)
        conv.weight.data[:] = rng.standard_normal(conv.weight.data.shape)
        conv.forward(rng.standard_normal((1, 2, 5, 5)), train=True)
        gin = conv.backward(np.zeros((1, 3, 5, 5)))
        assert np.all(conv.weight.grad == 0.0)
        assert np.all(conv.bias.grad == 0.0)
        assert np.all(gin == 0.0)

    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(1)
        conv = Conv2d(2, 3, 3)
        conv.weight.data[:] = rng.standard_normal(conv.weight.data.shape) * 0.5
        conv.bias.data[:] = rng.standard_normal(3) * 0.5
        x = rng.standard_normal((2, 2, 6, 6))
        r = rng.standard_normal((2, 3, 6, 6))
        conv.forward(x, train=True)
        gin = conv.backward(r).copy()

        def loss():
            return _loss_through(lambda: conv.forward(x, train=True), r)

        flat = rng.choice(conv.weight.data.size, size=5, replace=False)
        for f in flat:
            idx = np.unravel_index(int(f), conv.weight.data.shape)
            num = central_difference(loss, conv.weight.data, idx)
            assert rel_err(float(conv.weight.grad[idx]), num) < 1e-4
        num = central_difference(loss, conv.bias.data, (1,))
        assert rel_err(float(conv.bias.grad[1]), num) < 1e-4
        for idx in [(0, 0, 2, 3), (1, 1, 0, 5)]:
            num = central_difference(loss, x, idx)
            assert rel_err(float(gin[idx]), num) < 1e-4

    def test_backward_without_forward_rejected(self):
        conv = Conv2d(1, 1, 3)
        with pytest.raises(BackwardStateError):
            conv.backward(np.zeros((1, 1, 4, 4)))


class TestBatchNormBackward:
    def test_gradients_match_finite_differences(self):
        rng = np.random.default_rng(2)
        bn = BatchNorm2d(3)
        bn.gamma.data[:] = 1.0 + 0.2 * rng.standard_normal(3)
        bn.beta.data[:] = rng.standard_normal(3)
        x = rng.standard_normal((2, 3, 5, 5)) * 2.0
        r = rng.standard_normal((2, 3, 5, 5))
        bn.forward(x, train=True)
        gin = bn.backward(r).copy()

        def loss():
            return _loss_through(lambda: bn.forward(x, train=True), r)

        for c in range(3):
            assert rel_err(float(bn.gamma.grad[c]), central_difference(loss, bn.gamma.data, (c,))) < 1e-4
            assert rel_err(float(bn.beta.grad[c]), central_difference(loss, bn.beta.data, (c,))) < 1e-4
        for idx in [(0, 0, 1, 1), (1, 2, 4, 0)]:
            assert rel_err(float(gin[idx]), central_difference(loss, x, idx)) < 1e-4


class TestReluBackward:
    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(3)
        relu = ReLU()
        x = rng.standard_normal((1, 2, 4, 4))
        x[np.abs(x) < 1e-2] = 0.1
        r = rng.standard_normal((1, 2, 4, 4))
        relu.forward(x, train=True)
        gin = relu.backward(r).copy()

        def loss():
            return _loss_through(lambda: relu.forward(x, train=True), r)

        for idx in [(0, 0, 0, 0), (0, 1, 2, 3), (0, 1, 3, 1)]:
            assert rel_err(float(gin[idx]), central_difference(loss, x, idx)) < 1e-4


class TestResidualAndComposed:
    def test_residual_block_finite_differences(self):
        rng = np.random.default_rng(4)
        block = ResidualBlock(3, 3)
        for p in block.parameters():
            if p.name.endswith(".gamma"):
                p.data[:] = 1.0 + 0.1 * rng.standard_normal(p.data.shape)
            else:
                p.data[:] = 0.4 * rng.standard_normal(p.data.shape)
        x = rng.standard_normal((2, 3, 6, 6))
        r = rng.standard_normal((2, 3, 6, 6))
        block.forward(x, train=True)
        block.backward(r)

        def loss():
            return _loss_through(lambda: block.forward(x, train=True), r)

        params = block.parameters()
        for p in params[:4]:
            idx = np.unravel_index(int(rng.integers(p.data.size)), p.data.shape)
            assert rel_err(float(p.grad[idx]), central_difference(loss, p.data, idx)) < 1e-4

    def test_three_block_network_finite_differences(self):
        """FD check on 10 sampled parameters of the full composition."""
        rng = np.random.default_rng(5)
        net = Network(NetworkConfig(3, 4, 3, 1)).init_random(rng)
        x = rng.standard_normal((1, 1, 8, 8))
        r = rng.standard_normal((1, 1, 8, 8))
        net.forward_array(x, train=True)
        net.backward_array(r)
        grads = {p.name: p.grad.copy() for p in net.parameters()}

        def loss():
            return float(np.sum(r * net.forward_array(x, train=True)))

        params = net.parameters()
        picks = rng.choice(len(params), size=10, replace=False)
        for k in picks:
            p = params[int(k)]
            idx = np.unravel_index(int(rng.integers(p.data.size)), p.data.shape)
            num = central_difference(loss, p.data, idx)
            assert rel_err(float(grads[p.name][idx]), num) < 1e-4, p.name

    def test_zero_grad_resets(self):
        rng = np.random.default_rng(6)
        net = Network(NetworkConfig(1, 4, 3, 1)).init_random(rng)
        x = rng.standard_normal((1, 1, 8, 8))
        net.forward_array(x, train=True)
        net.backward_array(np.ones((1, 1, 8, 8)))
        assert any(np.any(p.grad != 0) for p in net.parameters())
        net.zero_grad()
        assert all(np.all(p.grad == 0) for p in net.parameters())


class TestL2Loss:
    def test_identical_tensors(self):
        x = np.random.default_rng(7).standard_normal((1, 1, 4, 4))
        loss, grad = l2_loss(x.copy(), x.copy())
        assert loss == 0.0
        assert np.all(grad == 0.0)

    def test_unit_offset(self):
        x = np.zeros((2, 1, 3, 3))
        loss, _ = l2_loss(x + 1.0, x)
        assert loss == pytest.approx(1.0, abs=1e-15)

    def test_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(8)
        p = rng.standard_normal((1, 2, 4, 4))
        t = rng.standard_normal((1, 2, 4, 4))
        _, grad = l2_loss(p.copy(), t)

        def loss():
            return l2_loss(p.copy(), t)[0]

        for idx in [(0, 0, 0, 0), (0, 1, 3, 3), (0, 0, 2, 1)]:
            num = central_difference(loss, p, idx)
            assert rel_err(float(grad[idx]), num, floor=1e-6) < 1e-6

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeMismatchError):
            l2_loss(np.zeros((1, 1, 2, 2)), np.zeros((1, 1, 2, 3)))
