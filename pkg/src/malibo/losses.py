"""Weighted binary cross-entropy used by every classifier in the package.

Per example with improvement weight ``w >= 0`` and pre-sigmoid score ``s``:

    loss(s, w) = -(w * ln sigmoid(s) + ln(1 - sigmoid(s)))

Only good-class examples carry positive weight, but every example pays the
negative-class term, so labels enter the math exclusively through ``w``.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

sigmoid = expit


def softplus(s: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, s)


def weighted_bce(s, w) -> np.ndarray:
    """Per-example loss; stable for large |s|."""
    s = np.asarray(s, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return w * softplus(-s) + softplus(s)


def weighted_bce_grad(s, w) -> np.ndarray:
    """d loss / d s = (w + 1) sigmoid(s) - w."""
    s = np.asarray(s, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    return (w + 1.0) * expit(s) - w


def weighted_bce_hess(s, w) -> np.ndarray:
    """d^2 loss / d s^2 = (w + 1) sigmoid(s) (1 - sigmoid(s))."""
    s = np.asarray(s, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    p = expit(s)
    return (w + 1.0) * p * (1.0 - p)
