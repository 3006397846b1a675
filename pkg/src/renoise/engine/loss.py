"""Mean-squared-error training loss."""

from __future__ import annotations

import numpy as np

from ..exceptions import ShapeMismatchError


def l2_loss(prediction: np.ndarray, target: np.ndarray):
    """Return (loss, grad) where loss = mean((p - t)^2).

    The gradient with respect to the prediction is 2 (p - t) / n for n total
    elements, matching the loss exactly.
    """
    if prediction.shape != target.shape:
        raise ShapeMismatchError("l2_loss", target.shape, prediction.shape)
    diff = prediction - target
    with np.errstate(over="ignore"):
        # overflow legitimately yields inf; the training loop's divergence
        # guard is the reporting path for that
        loss = float(np.mean(diff * diff))
    grad = diff
    grad *= 2.0 / diff.size
    return loss, grad
