"""Bayesian adaptation of a target-task embedding against a frozen model.

The embedding posterior is a Gaussian centered at the MAP estimate of the
regularized weighted-BCE objective, with precision equal to the objective's
Hessian there. Thompson samples drawn from it act as stochastic acquisition
functions; the marginalized class probability uses the classic probit
approximation of the sigmoid-Gaussian integral.

Any model exposing ``features(X)`` and ``mean_logit(X)`` works, which keeps
these routines independent of how the feature map was obtained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import label_observations
from .losses import sigmoid, weighted_bce, weighted_bce_grad
from .optim import LbfgsConfig, LbfgsResult, lbfgs_minimize
from .validation import check_rng

JITTER_LADDER = (0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6)


class PosteriorError(RuntimeError):
    """Covariance factorization failed even with maximal jitter."""


@dataclass(frozen=True)
class TaskPosterior:
    """Gaussian embedding posterior N(z_map, cov) with cov = precision^-1."""

    z_map: np.ndarray
    precision: np.ndarray
    cov_chol: np.ndarray  # lower-triangular factor of the covariance

    @property
    def dim(self) -> int:
        return self.z_map.size


def _design(model, X, ys, gamma):
    """Features, mean logits and improvement weights for a task dataset."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    phi = np.atleast_2d(model.features(X))
    mean = np.atleast_1d(model.mean_logit(X))
    weights = label_observations(ys, gamma).weights
    return phi, mean, weights


def map_objective(z, phi, mean, weights):
    """Value and gradient of the negative log posterior of the embedding."""
    s = mean + phi @ z
    value = 0.5 * float(z @ z) + float(np.sum(weighted_bce(s, weights)))
    grad = z + phi.T @ weighted_bce_grad(s, weights)
    return value, grad


def map_estimate(model, X, ys, gamma: float, config: LbfgsConfig | None = None,
                 full_output: bool = False):
    """MAP embedding of the target task, starting from the prior mode.

    An empty dataset returns the prior mode (zeros). With ``full_output``
    the L-BFGS result is returned as well so callers can inspect
    convergence.
    """
    d = model.features(np.zeros((1, model.input_dim_))).shape[-1]
    ys = np.asarray(ys, dtype=np.float64)
    if ys.size == 0:
        z = np.zeros(d)
        result = LbfgsResult(z, 0.0, 0.0, 0, True, "empty dataset")
        return (z, result) if full_output else z
    phi, mean, weights = _design(model, X, ys, gamma)
    result = lbfgs_minimize(lambda z: map_objective(z, phi, mean, weights),
                            np.zeros(d), config or LbfgsConfig())
    return (result.x, result) if full_output else result.x


def laplace_posterior(model, z_map: np.ndarray, X, ys, gamma: float) -> TaskPosterior:
    """Gaussian posterior from the Hessian of the MAP objective at ``z_map``.

    Precision = I + sum_n (w_n + 1) p_n (1 - p_n) phi_n phi_n^T with
    p_n the predicted class probability at the MAP embedding.
    """
    z_map = np.asarray(z_map, dtype=np.float64)
    d = z_map.size
    precision = np.eye(d)
    ys = np.asarray(ys, dtype=np.float64)
    if ys.size:
        phi, mean, weights = _design(model, X, ys, gamma)
        p = sigmoid(mean + phi @ z_map)
        factor = (weights + 1.0) * p * (1.0 - p)
        precision = precision + (phi * factor[:, None]).T @ phi
        precision = 0.5 * (precision + precision.T)
    cov = np.linalg.inv(precision)
    cov = 0.5 * (cov + cov.T)
    for jitter in JITTER_LADDER:
        try:
            chol = np.linalg.cholesky(cov + jitter * np.eye(d))
            return TaskPosterior(z_map, precision, chol)
        except np.linalg.LinAlgError:
            continue
    raise PosteriorError("covariance not factorizable after maximal jitter")


def adapt_posterior(model, X, ys, gamma: float,
                    config: LbfgsConfig | None = None) -> TaskPosterior:
    """MAP estimation followed by the Laplace step."""
    z_map = map_estimate(model, X, ys, gamma, config=config)
    return laplace_posterior(model, z_map, X, ys, gamma)


def thompson_sample(posterior: TaskPosterior, rng) -> np.ndarray:
    """One posterior draw z_map + L eps with eps ~ N(0, I)."""
    rng = check_rng(rng)
    return posterior.z_map + posterior.cov_chol @ rng.standard_normal(posterior.dim)


def probit_sigmoid_gaussian(mu, var):
    """Closed-form approximation of E[sigmoid(a)], a ~ N(mu, var).

    Exact at var = 0; the output is clamped to the open interval (0, 1).
    """
    mu = np.asarray(mu, dtype=np.float64)
    var = np.asarray(var, dtype=np.float64)
    p = sigmoid(mu / np.sqrt(1.0 + np.pi * var / 8.0))
    return np.clip(p, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


def probit_predict(model, posterior: TaskPosterior, X) -> np.ndarray:
    """Marginalized class-1 probability under the Gaussian posterior."""
    single = np.asarray(X).ndim == 1
    phi = np.atleast_2d(model.features(np.atleast_2d(X)))
    mu = np.atleast_1d(model.mean_logit(np.atleast_2d(X))) + phi @ posterior.z_map
    var = np.sum((phi @ posterior.cov_chol) ** 2, axis=1)
    p = probit_sigmoid_gaussian(mu, var)
    return float(p[0]) if single else p
