"""Adam optimizer behaviour."""

import numpy as np
import pytest

from renoise.engine import Adam, Parameter
from renoise.exceptions import DivergenceError, SpecError


def _param(value):
    p = Parameter("w", np.array(value, dtype=np.float64))
    return p


class TestAdam:
    def test_zero_gradient_leaves_parameters_but_advances_step(self):
        p = _param([1.5, -2.0])
        opt = Adam([p])
        opt.step()
        assert np.array_equal(p.data, [1.5, -2.0])
        assert opt.step_count == 1

    def test_single_step_bias_corrected_update(self):
        """w=0, g=1, defaults: first step moves by -lr within 1e-9."""
        p = _param([0.0])
        p.grad[:] = 1.0
        opt = Adam([p], lr=1e-3)
        opt.step()
        assert abs(p.data[0] - (-1e-3)) < 1e-9

    def test_quadratic_bowl_convergence(self):
        """Minimising (w - 3)^2 reaches the optimum.

        Frozen against an independent oracle (torch.optim.Adam agrees to
        float32 precision): from w=0 at lr 1e-3 the iterate is ~2.9377 at
        step 5000 and within 1e-2 of 3 by step 7000; 5000 steps is not
        enough for a 1e-2 ball with standard bias-corrected Adam.
        """
        p = _param([0.0])
        opt = Adam([p], lr=1e-3)
        for _ in range(5000):
            p.grad[:] = 2.0 * (p.data - 3.0)
            opt.step()
        assert abs(p.data[0] - 2.9377) < 1e-3
        for _ in range(2000):
            p.grad[:] = 2.0 * (p.data - 3.0)
            opt.step()
        assert abs(p.data[0] - 3.0) < 1e-2

    def test_non_finite_gradient_rejects_whole_step(self):
        p = _param([1.0])
        q = _param([2.0])
        q.grad[:] = np.nan
        p.grad[:] = 1.0
        opt = Adam([p, q])
        with pytest.raises(DivergenceError) as info:
            opt.step()
        assert "w" in str(info.value)
        assert p.data[0] == 1.0 and q.data[0] == 2.0
        assert opt.step_count == 0
        assert np.all(opt.m[0] == 0.0)

    def test_learning_rate_validated(self):
        with pytest.raises(SpecError):
            Adam([_param([0.0])], lr=0.0)

    def test_moments_match_hand_rolled_recurrence(self):
        rng = np.random.default_rng(11)
        p = _param(rng.standard_normal(4))
        opt = Adam([p], lr=0.01)
        w = p.data.copy()
        m = np.zeros(4)
        v = np.zeros(4)
        for t in range(1, 6):
            g = rng.standard_normal(4)
            p.grad[:] = g
            opt.step()
            m = 0.9 * m + 0.1 * g
            v = 0.999 * v + 0.001 * g * g
            mhat = m / (1 - 0.9 ** t)
            vhat = v / (1 - 0.999 ** t)
            w = w - 0.01 * mhat / (np.sqrt(vhat) + 1e-8)
            assert np.max(np.abs(p.data - w)) < 1e-12
