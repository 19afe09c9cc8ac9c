import numpy as np
import pytest

from malibo.network import (
    NetworkShape,
    ParamVector,
    backward_features,
    feature_jacobian,
    features,
    forward_cached,
    init_network_params,
    logit,
    mean_logit_from_features,
)
from malibo.optim import finite_difference_gradient


def small_net(seed=0, input_dim=3, feature_dim=4):
    shape = NetworkShape(input_dim, hidden_units=8, hidden_layers=2, feature_dim=feature_dim)
    params = init_network_params(shape, np.random.default_rng(seed))
    return shape, params


class TestParamVector:
    def test_segments_partition_exactly(self):
        pv = ParamVector.zeros({"a": (2, 3), "b": (4,)})
        assert len(pv) == 10
        assert pv.view("a").shape == (2, 3)
        pv.view("b")[:] = 1.0
        assert pv.values[6:].tolist() == [1.0] * 4

    def test_bad_offsets_rejected(self):
        with pytest.raises(ValueError):
            ParamVector(np.zeros(5), {"a": (1, (2,)), "b": (3, (2,))})
        with pytest.raises(ValueError):
            ParamVector(np.zeros(5), {"a": (0, (2,))})

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            ParamVector(np.array([np.nan]), {"a": (0, (1,))})


class TestForward:
    def test_deterministic(self):
        shape, params = small_net()
        x = np.array([0.1, 0.5, 0.9])
        np.testing.assert_array_equal(features(params, shape, x), features(params, shape, x))

    def test_continuity_smoke(self):
        shape, params = small_net()
        x = np.array([0.3, 0.3, 0.3])
        phi0 = features(params, shape, x)
        phi1 = features(params, shape, x + 1e-9)
        assert np.max(np.abs(phi1 - phi0)) < 1e-6

    def test_batch_matches_single(self):
        shape, params = small_net()
        X = np.random.default_rng(1).uniform(size=(5, 3))
        batch = features(params, shape, X)
        for i in range(5):
            np.testing.assert_allclose(batch[i], features(params, shape, X[i]))


class TestLogit:
    def test_zero_embedding_gives_mean_only(self):
        shape, params = small_net()
        x = np.array([0.2, 0.4, 0.6])
        phi = features(params, shape, x)
        expected = float(mean_logit_from_features(params, np.atleast_2d(phi))[0])
        assert logit(params, shape, x) == pytest.approx(expected)
        assert logit(params, shape, x, np.zeros(4)) == pytest.approx(expected)

    def test_linear_in_embedding(self):
        shape, params = small_net()
        rng = np.random.default_rng(2)
        x = rng.uniform(size=3)
        z1, z2 = rng.normal(size=4), rng.normal(size=4)
        phi = features(params, shape, x)
        lhs = logit(params, shape, x, z1 + z2) - logit(params, shape, x, z2)
        assert lhs == pytest.approx(float(z1 @ phi))

    def test_sigmoid_range(self):
        from scipy.special import expit

        shape, params = small_net()
        rng = np.random.default_rng(3)
        for _ in range(50):
            p = expit(logit(params, shape, rng.uniform(size=3), rng.normal(size=4)))
            assert 0.0 < p < 1.0


class TestGradients:
    def test_feature_jacobian_matches_finite_differences(self):
        shape, params = small_net(seed=5)
        rng = np.random.default_rng(7)
        for _ in range(3):
            x = rng.uniform(size=3)
            jac = feature_jacobian(params, shape, x)
            for j in range(shape.feature_dim):
                fd = finite_difference_gradient(
                    lambda v: float(features(params, shape, v)[j]), x
                )
                scale = np.maximum(np.abs(fd), 1e-6)
                assert np.max(np.abs(jac[j] - fd) / scale) < 1e-4

    def test_parameter_gradient_matches_finite_differences(self):
        shape, params = small_net(seed=11)
        rng = np.random.default_rng(13)
        X = rng.uniform(size=(6, 3))
        coeffs = rng.normal(size=(6, shape.feature_dim))  # arbitrary upstream seed

        def scalar_loss(flat):
            p = ParamVector(flat, params.segments)
            phi, _ = forward_cached(p, shape, X)
            return float(np.sum(coeffs * phi))

        phi, cache = forward_cached(params, shape, X)
        grad, _ = backward_features(params, shape, cache, coeffs)
        fd = finite_difference_gradient(scalar_loss, params.values)
        # mean head receives no gradient from features alone
        offset, shp = params.segments["mean_w"]
        assert np.all(grad.values[offset:] == 0)
        scale = np.maximum(np.abs(fd), 1e-6)
        assert np.max(np.abs(grad.values - fd) / scale) < 1e-4
