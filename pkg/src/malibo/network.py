"""Residual feedforward feature network with hand-coded backpropagation.

The architecture is fixed: a linear input projection, ``hidden_layers``
pre-activation residual blocks (``h <- h + W elu(h) + b``), a linear map to
the feature space, and a scalar mean head with bias. The task head is a
bias-free inner product with an embedding vector and lives with the callers.

Everything is float64; analytic gradients are verified against central
finite differences in the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping

import numpy as np


class ParamVector:
    """Flat float64 parameter array with named, exactly-partitioning segments."""

    def __init__(self, values: np.ndarray, segments: Mapping[str, tuple[int, tuple[int, ...]]]):
        self.values = np.asarray(values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("parameter storage must be flat")
        self.segments = dict(segments)
        end = 0
        for name, (offset, shape) in self.segments.items():
            if offset != end:
                raise ValueError(f"segment {name!r} starts at {offset}, expected {end}")
            end += int(np.prod(shape))
        if end != self.values.size:
            raise ValueError(f"segments cover {end} entries, storage has {self.values.size}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("parameters contain non-finite values")

    @classmethod
    def zeros(cls, shapes: Mapping[str, tuple[int, ...]]) -> "ParamVector":
        segments = {}
        offset = 0
        for name, shape in shapes.items():
            segments[name] = (offset, tuple(shape))
            offset += int(np.prod(shape))
        return cls(np.zeros(offset), segments)

    def view(self, name: str) -> np.ndarray:
        offset, shape = self.segments[name]
        return self.values[offset : offset + int(np.prod(shape))].reshape(shape)

    def copy(self) -> "ParamVector":
        return ParamVector(self.values.copy(), self.segments)

    def zeros_like(self) -> "ParamVector":
        return ParamVector(np.zeros_like(self.values), self.segments)

    def __len__(self) -> int:
        return self.values.size


@dataclass(frozen=True)
class NetworkShape:
    input_dim: int
    hidden_units: int = 64
    hidden_layers: int = 4
    feature_dim: int = 50

    def segment_shapes(self) -> dict[str, tuple[int, ...]]:
        shapes: dict[str, tuple[int, ...]] = {
            "in_w": (self.hidden_units, self.input_dim),
            "in_b": (self.hidden_units,),
        }
        for i in range(self.hidden_layers):
            shapes[f"block{i}_w"] = (self.hidden_units, self.hidden_units)
            shapes[f"block{i}_b"] = (self.hidden_units,)
        shapes["out_w"] = (self.feature_dim, self.hidden_units)
        shapes["out_b"] = (self.feature_dim,)
        shapes["mean_w"] = (self.feature_dim,)
        shapes["mean_b"] = (1,)
        return shapes


def init_network_params(shape: NetworkShape, rng: np.random.Generator) -> ParamVector:
    params = ParamVector.zeros(shape.segment_shapes())
    params.view("in_w")[:] = rng.standard_normal((shape.hidden_units, shape.input_dim)) * np.sqrt(
        1.0 / shape.input_dim
    )
    for i in range(shape.hidden_layers):
        params.view(f"block{i}_w")[:] = rng.standard_normal(
            (shape.hidden_units, shape.hidden_units)
        ) * np.sqrt(1.0 / shape.hidden_units)
    params.view("out_w")[:] = rng.standard_normal(
        (shape.feature_dim, shape.hidden_units)
    ) * np.sqrt(1.0 / shape.hidden_units)
    params.view("mean_w")[:] = rng.standard_normal(shape.feature_dim) * np.sqrt(
        1.0 / shape.feature_dim
    )
    return params


def _elu(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _elu_prime(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0, 1.0, np.exp(np.minimum(x, 0.0)))


def forward_cached(params: ParamVector, shape: NetworkShape, X: np.ndarray):
    """Batched feature forward pass; returns ``(Phi, cache)`` for backprop."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    h = X @ params.view("in_w").T + params.view("in_b")
    pre = [h]  # residual-stream values entering each block
    acts = []
    for i in range(shape.hidden_layers):
        a = _elu(h)
        acts.append(a)
        h = h + a @ params.view(f"block{i}_w").T + params.view(f"block{i}_b")
        pre.append(h)
    phi = h @ params.view("out_w").T + params.view("out_b")
    return phi, (X, pre, acts)


def features(params: ParamVector, shape: NetworkShape, X: np.ndarray) -> np.ndarray:
    """Feature map of a batch (or single point, returned as ``(d,)``)."""
    single = np.asarray(X).ndim == 1
    phi, _ = forward_cached(params, shape, X)
    return phi[0] if single else phi


def backward_features(params: ParamVector, shape: NetworkShape, cache,
                      d_phi: np.ndarray, grad: ParamVector | None = None):
    """Accumulate parameter gradients from an upstream ``dL/dPhi``.

    Returns ``(grad, dX)``. Pass an existing gradient accumulator to sum
    contributions across sub-batches.
    """
    X, pre, acts = cache
    if grad is None:
        grad = params.zeros_like()
    grad.view("out_w")[:] += d_phi.T @ pre[-1]
    grad.view("out_b")[:] += d_phi.sum(axis=0)
    dh = d_phi @ params.view("out_w")
    for i in reversed(range(shape.hidden_layers)):
        grad.view(f"block{i}_w")[:] += dh.T @ acts[i]
        grad.view(f"block{i}_b")[:] += dh.sum(axis=0)
        dh = dh + (dh @ params.view(f"block{i}_w")) * _elu_prime(pre[i])
    grad.view("in_w")[:] += dh.T @ X
    grad.view("in_b")[:] += dh.sum(axis=0)
    dX = dh @ params.view("in_w")
    return grad, dX


def mean_logit_from_features(params: ParamVector, phi: np.ndarray) -> np.ndarray:
    return phi @ params.view("mean_w") + params.view("mean_b")[0]


def logit(params: ParamVector, shape: NetworkShape, X: np.ndarray,
          z: np.ndarray | None = None) -> np.ndarray:
    """Pre-sigmoid prediction ``m(phi(x)) + z . phi(x)``; ``z=None`` means z=0."""
    single = np.asarray(X).ndim == 1
    phi, _ = forward_cached(params, shape, X)
    s = mean_logit_from_features(params, phi)
    if z is not None:
        s = s + phi @ np.asarray(z, dtype=np.float64)
    return float(s[0]) if single else s


def feature_jacobian(params: ParamVector, shape: NetworkShape, x: np.ndarray) -> np.ndarray:
    """Jacobian ``dPhi/dx`` of a single point, shape ``(feature_dim, input_dim)``."""
    phi, cache = forward_cached(params, shape, np.atleast_2d(x))
    jac = np.zeros((shape.feature_dim, shape.input_dim))
    for j in range(shape.feature_dim):
        seed = np.zeros((1, shape.feature_dim))
        seed[0, j] = 1.0
        _, dX = backward_features(params, shape, cache, seed)
        jac[j] = dX[0]
    return jac
