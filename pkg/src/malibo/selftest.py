"""Built-in oracle suites: gradient check, Laplace vs. dense grid, probit vs.
Monte Carlo. These mirror the heavier assertions in the test suite at a size
that finishes in seconds, for quick field verification of an installation.
"""

from __future__ import annotations

import numpy as np

from .adapt import laplace_posterior, map_estimate, map_objective, probit_sigmoid_gaussian
from .data import label_observations
from .losses import sigmoid, weighted_bce
from .meta import meta_objective
from .network import NetworkShape, ParamVector, init_network_params
from .optim import finite_difference_gradient


class ToyFeatureModel:
    """Fixed affine feature map, enough to drive the adaptation routines."""

    def __init__(self, weight: np.ndarray, bias: np.ndarray, mean_weight: np.ndarray):
        self.weight = np.asarray(weight, dtype=np.float64)  # (d, input_dim)
        self.bias = np.asarray(bias, dtype=np.float64)
        self.mean_weight = np.asarray(mean_weight, dtype=np.float64)
        self.input_dim_ = self.weight.shape[1]

    @classmethod
    def random(cls, input_dim: int, feature_dim: int, rng) -> "ToyFeatureModel":
        return cls(
            rng.normal(size=(feature_dim, input_dim)),
            rng.normal(size=feature_dim) * 0.1,
            rng.normal(size=feature_dim) * 0.3,
        )

    def features(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        return X @ self.weight.T + self.bias

    def mean_logit(self, X) -> np.ndarray:
        return self.features(X) @ self.mean_weight


def random_meta_instance(n_tasks: int, n_obs: int, input_dim: int, feature_dim: int,
                         seed: int, hidden_units: int = 8, hidden_layers: int = 2):
    """Small random meta-training problem with embeddings in the parameters."""
    rng = np.random.default_rng(seed)
    shape = NetworkShape(input_dim, hidden_units, hidden_layers, feature_dim)
    shapes = shape.segment_shapes()
    shapes["Z"] = (n_tasks, feature_dim)
    params = ParamVector.zeros(shapes)
    params.values[:] = rng.standard_normal(len(params)) * 0.3
    net = init_network_params(shape, rng)
    params.values[: len(net)] = net.values
    task_x = [rng.uniform(size=(n_obs, input_dim)) for _ in range(n_tasks)]
    task_w = []
    for _ in range(n_tasks):
        ys = rng.normal(size=n_obs)
        task_w.append(label_observations(ys, 1.0 / 3.0).weights)
    return params, shape, task_x, task_w


def check_meta_gradient(n_instances: int = 3, tol: float = 1e-4) -> tuple[bool, str]:
    """Analytic meta-loss gradient vs. central finite differences."""
    worst = 0.0
    for k in range(n_instances):
        params, shape, task_x, task_w = random_meta_instance(2, 8, 2, 3, seed=100 + k)
        lam, lks, lcov = 0.1, 0.4, 0.8

        def value(flat):
            p = ParamVector(flat, params.segments)
            return meta_objective(p, shape, task_x, task_w, lam, lks, lcov)[0]

        _, grad = meta_objective(params, shape, task_x, task_w, lam, lks, lcov)
        fd = finite_difference_gradient(value, params.values)
        scale = np.maximum(np.abs(fd), 1e-6)
        worst = max(worst, float(np.max(np.abs(grad - fd) / scale)))
    return worst < tol, f"max relative gradient error {worst:.2e} (tolerance {tol:.0e})"


def grid_posterior_predictive(phi, mean, weights, phi_test, mean_test,
                              half_width: float = 6.0, step: float = 0.02) -> np.ndarray:
    """Numerical integration of the 2-d embedding posterior predictive."""
    axis = np.arange(-half_width, half_width + step / 2, step)
    g1, g2 = np.meshgrid(axis, axis, indexing="ij")
    grid = np.stack([g1.ravel(), g2.ravel()], axis=1)
    scores = mean[None, :] + grid @ phi.T
    log_post = -0.5 * np.sum(grid**2, axis=1) - np.sum(weighted_bce(scores, weights), axis=1)
    log_post -= log_post.max()
    post = np.exp(log_post)
    post /= post.sum()
    test_scores = mean_test[None, :] + grid @ phi_test.T
    return post @ sigmoid(test_scores)


def check_laplace_vs_grid(n_test: int = 20, tol: float = 0.05) -> tuple[bool, str]:
    """Probit-Laplace predictive vs. dense numerical integration, d=2 toy."""
    rng = np.random.default_rng(7)
    model = ToyFeatureModel.random(input_dim=2, feature_dim=2, rng=rng)
    X = rng.uniform(size=(20, 2))
    ys = rng.normal(size=20)
    gamma = 1.0 / 3.0
    z_map = map_estimate(model, X, ys, gamma)
    posterior = laplace_posterior(model, z_map, X, ys, gamma)

    X_test = rng.uniform(size=(n_test, 2))
    phi_test = model.features(X_test)
    mean_test = model.mean_logit(X_test)
    weights = label_observations(ys, gamma).weights
    exact = grid_posterior_predictive(model.features(X), model.mean_logit(X), weights,
                                      phi_test, mean_test)
    mu = mean_test + phi_test @ posterior.z_map
    var = np.sum((phi_test @ posterior.cov_chol) ** 2, axis=1)
    approx = probit_sigmoid_gaussian(mu, var)
    worst = float(np.max(np.abs(exact - approx)))
    return worst < tol, f"max |grid - probit| = {worst:.4f} (tolerance {tol})"


def check_probit_vs_monte_carlo(n_samples: int = 1_000_000,
                                tol: float = 0.02) -> tuple[bool, str]:
    rng = np.random.default_rng(11)
    eps = rng.standard_normal(n_samples)
    worst = 0.0
    for mu in range(-4, 5):
        for var in (0.0, 0.5, 1.0, 2.0, 4.0, 8.0, 10.0):
            mc = float(np.mean(sigmoid(mu + np.sqrt(var) * eps)))
            approx = float(probit_sigmoid_gaussian(mu, var))
            worst = max(worst, abs(mc - approx))
    return worst <= tol, f"max |MC - probit| = {worst:.4f} (tolerance {tol})"


def check_map_vs_descent_restart(tol: float = 1e-6) -> tuple[bool, str]:
    """MAP objective at the solution never exceeds the prior-mode value."""
    rng = np.random.default_rng(23)
    model = ToyFeatureModel.random(input_dim=3, feature_dim=4, rng=rng)
    worst = -np.inf
    for _ in range(5):
        X = rng.uniform(size=(12, 3))
        ys = rng.normal(size=12)
        z = map_estimate(model, X, ys, 1.0 / 3.0)
        phi = model.features(X)
        mean = model.mean_logit(X)
        w = label_observations(ys, 1.0 / 3.0).weights
        gap = map_objective(z, phi, mean, w)[0] - map_objective(np.zeros(4), phi, mean, w)[0]
        worst = max(worst, gap)
    return worst <= tol, f"max objective(z_map) - objective(0) = {worst:.2e}"


SUITES = (
    ("gradient-check", check_meta_gradient),
    ("laplace-vs-grid", check_laplace_vs_grid),
    ("probit-vs-monte-carlo", check_probit_vs_monte_carlo),
    ("map-never-worse-than-prior", check_map_vs_descent_restart),
)


def run_selftest(stream=None) -> bool:
    """Run every oracle suite, print one pass/fail line each."""
    import sys

    stream = stream or sys.stdout
    all_ok = True
    for name, fn in SUITES:
        ok, detail = fn()
        all_ok &= ok
        print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}", file=stream)
    return all_ok
