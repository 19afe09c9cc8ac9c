import numpy as np
import pytest

from malibo.losses import sigmoid, weighted_bce, weighted_bce_grad, weighted_bce_hess
from malibo.optim import finite_difference_gradient


def test_values_at_zero_logit():
    # w=1, s=0: -(ln 1/2 + ln 1/2) = 2 ln 2
    assert weighted_bce(0.0, 1.0) == pytest.approx(2 * np.log(2))
    # gradient (w+1) sigmoid(s) - w at s=0
    assert weighted_bce_grad(0.0, 1.0) == pytest.approx(0.0)
    # hessian reduces to sigmoid'(0) = 1/4 for w=0
    assert weighted_bce_hess(0.0, 0.0) == pytest.approx(0.25)


def test_grad_and_hess_match_finite_differences():
    rng = np.random.default_rng(0)
    for _ in range(50):
        s = float(rng.normal() * 3)
        w = float(np.abs(rng.normal()))
        fd_grad = finite_difference_gradient(lambda v: float(weighted_bce(v[0], w)),
                                             np.array([s]))[0]
        assert weighted_bce_grad(s, w) == pytest.approx(fd_grad, rel=1e-6, abs=1e-8)
        fd_hess = finite_difference_gradient(lambda v: float(weighted_bce_grad(v[0], w)),
                                             np.array([s]))[0]
        assert weighted_bce_hess(s, w) == pytest.approx(fd_hess, rel=1e-5, abs=1e-8)


def test_stable_for_extreme_logits():
    assert np.isfinite(weighted_bce(800.0, 2.0))
    assert np.isfinite(weighted_bce(-800.0, 2.0))
    assert weighted_bce(-800.0, 0.0) == pytest.approx(0.0)
    assert sigmoid(0.0) == 0.5
