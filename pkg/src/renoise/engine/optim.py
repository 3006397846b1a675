"""Adam optimizer with bias correction."""

from __future__ import annotations

import numpy as np

from ..exceptions import DivergenceError, SpecError


class Adam:
    """Per-parameter first/second moment accumulators and a fixed step size.

    Defaults are the conventional lr 0.001, beta1 0.9, beta2 0.999, eps 1e-8.
    """

    def __init__(self, parameters, lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise SpecError(f"learning rate must be > 0, got {lr}")
        self.parameters = list(parameters)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.parameters]
        self.v = [np.zeros_like(p.data) for p in self.parameters]

    def step(self) -> None:
        """Apply one update from the gradients currently held by the parameters.

        A non-finite gradient rejects the whole step: no parameter or moment
        is touched and the offending parameter is named.
        """
        for p in self.parameters:
            if not np.all(np.isfinite(p.grad)):
                raise DivergenceError(self.step_count, f"non-finite gradient in {p.name}")
        self.step_count += 1
        b1c = 1.0 - self.beta1 ** self.step_count
        b2c = 1.0 - self.beta2 ** self.step_count
        for p, m, v in zip(self.parameters, self.m, self.v):
            g = p.grad
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p.data -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)
