"""Optimization strategies and the sequential BO driver.

Strategies expose ``propose(history, space, rng) -> (point, kind)`` over
encoded points. Model-based strategies rescale the target-task objective by
the mean positive improvement before fitting, which leaves labels and
relative weights untouched but makes whole proposal sequences invariant
under affine transforms of the objective.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .adapt import PosteriorError, adapt_posterior, thompson_sample
from .base import ParamsMixin
from .data import MetaDataset, bounding_box, label_observations
from .gbt import GradientBoostedClassifier, estimate_n_trees
from .losses import sigmoid
from .meta import MetaClassifier
from .spaces import Continuous, Integer, SearchSpace
from .validation import check_rng

N_ACQ_SAMPLES = 5120
# fixed stream for the data-independent first proposal of the meta strategy
_INIT_CANDIDATE_SEED = 20240521


@dataclass(frozen=True)
class HistoryEntry:
    x: np.ndarray
    y: float
    iteration: int
    kind: str


@dataclass
class BoHistory:
    """Evaluation log of one optimization run; iterations start at 1."""

    entries: list[HistoryEntry] = field(default_factory=list)

    def append(self, x: np.ndarray, y: float, kind: str) -> None:
        self.entries.append(HistoryEntry(np.asarray(x, dtype=np.float64), float(y),
                                         len(self.entries) + 1, kind))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def xs(self) -> np.ndarray:
        return np.asarray([e.x for e in self.entries])

    @property
    def ys(self) -> np.ndarray:
        return np.asarray([e.y for e in self.entries])

    def finite_data(self) -> tuple[np.ndarray, np.ndarray]:
        """Observations with finite outcomes, the only ones models see."""
        if not self.entries:
            return np.empty((0, 0)), np.empty(0)
        xs, ys = self.xs, self.ys
        mask = np.isfinite(ys)
        return xs[mask], ys[mask]

    def incumbent_trace(self) -> np.ndarray:
        ys = np.where(np.isfinite(self.ys), self.ys, np.inf)
        return np.minimum.accumulate(ys)


def maximize_acquisition(acq: Callable[[np.ndarray], np.ndarray], space: SearchSpace,
                         rng, n_samples: int = N_ACQ_SAMPLES,
                         candidates: np.ndarray | None = None) -> np.ndarray:
    """Argmax of ``acq`` over uniform snapped samples; first-hit tie rule."""
    if candidates is None:
        candidates = space.sample_encoded(check_rng(rng), n_samples)
    scores = np.asarray(acq(candidates), dtype=np.float64)
    return candidates[int(np.argmax(scores))].copy()


def rescale_objective(ys: np.ndarray, gamma: float) -> np.ndarray:
    """Divide by the mean positive improvement at the gamma-threshold.

    Order-preserving, so labels are unchanged and weights become scale-free;
    degenerate samples (no positive improvement) are passed through.
    """
    labeled = label_observations(ys, gamma)
    positive = labeled.weights[labeled.weights > 0]
    if positive.size == 0:
        return ys
    scale = float(np.mean(positive))
    if not (np.isfinite(scale) and scale > 0):
        return ys
    return ys / scale


class RandomSearchStrategy(ParamsMixin):
    def __init__(self):
        pass

    def propose(self, history: BoHistory, space: SearchSpace, rng):
        return space.sample_encoded(rng, 1)[0], "random"


class LfboStrategy(ParamsMixin):
    """Classifier-based expected-improvement search with boosted trees.

    The first ``n_initial`` proposals are uniform; afterwards the threshold,
    labels and weights are recomputed from the full history each iteration
    and a boosted ensemble over a constant prior logit provides the
    acquisition. Its probability output is maximized directly, which shares
    its argmax with the probability odds.
    """

    def __init__(self, gamma: float = 1.0 / 3.0, n_initial: int = 10,
                 n_estimators: int = 100, learning_rate: float = 0.1,
                 max_depth: int = 3, min_samples_split: int = 2,
                 min_samples_leaf: int = 1, n_acq_samples: int = N_ACQ_SAMPLES,
                 scale_free: bool = True):
        self.gamma = gamma
        self.n_initial = n_initial
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.n_acq_samples = n_acq_samples
        self.scale_free = scale_free

    def _gbt_params(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
        }

    def _sample(self, space: SearchSpace, rng, n: int) -> np.ndarray:
        return space.sample_encoded(rng, n)

    def propose(self, history: BoHistory, space: SearchSpace, rng):
        xs, ys = history.finite_data()
        if len(ys) < self.n_initial:
            return self._sample(space, rng, 1)[0], "random"
        if self.scale_free:
            ys = rescale_objective(ys, self.gamma)
        labeled = label_observations(ys, self.gamma)
        base = math.log(self.gamma / (1.0 - self.gamma))
        clf = GradientBoostedClassifier(**self._gbt_params()).fit(xs, labeled, base)
        candidates = self._sample(space, rng, self.n_acq_samples)
        point = maximize_acquisition(clf.predict_proba, space, rng, candidates=candidates)
        return point, "gb"


class LfboBoundingBoxStrategy(LfboStrategy):
    """LFBO restricted to the hull of the best points of related tasks."""

    def __init__(self, meta: MetaDataset, top_m: int = 1, **lfbo_params):
        super().__init__(**lfbo_params)
        self.meta = meta
        self.top_m = top_m
        self.box_ = bounding_box(meta, top_m)

    def _sample(self, space: SearchSpace, rng, n: int) -> np.ndarray:
        return sample_in_box(space, self.box_, check_rng(rng), n)


def sample_in_box(space: SearchSpace, box: SearchSpace, rng, n: int) -> np.ndarray:
    """Uniform samples of valid grid points inside an encoded bounding box."""
    lo = np.asarray([d.lo for d in box.dims])
    hi = np.asarray([d.hi for d in box.dims])
    pts = np.empty((n, space.encoded_dim))
    offset = 0
    for dim in space.dims:
        sl = slice(offset, offset + dim.encoded_width)
        if isinstance(dim, Continuous):
            pts[:, sl] = rng.uniform(lo[offset], hi[offset], size=(n, 1))
        elif isinstance(dim, Integer):
            k = len(dim.levels)
            coords = np.arange(k) / (k - 1) if k > 1 else np.zeros(1)
            allowed = np.nonzero((coords >= lo[offset] - 1e-12) & (coords <= hi[offset] + 1e-12))[0]
            if allowed.size == 0:  # box between grid points: take the nearest level
                center = 0.5 * (lo[offset] + hi[offset])
                allowed = np.asarray([int(np.argmin(np.abs(coords - center)))])
            pts[:, sl] = coords[rng.choice(allowed, size=n)][:, None]
        else:
            allowed = np.nonzero(hi[sl] >= 0.5)[0]
            if allowed.size == 0:
                allowed = np.arange(dim.n_choices)
            block = np.zeros((n, dim.n_choices))
            block[np.arange(n), rng.choice(allowed, size=n)] = 1.0
            pts[:, sl] = block
        offset += dim.encoded_width
    return pts


class MaliboStrategy(ParamsMixin):
    """Meta-learned classifier with Bayesian task adaptation.

    Iteration 1 maximizes the task-agnostic mean prediction and touches
    neither the history nor the random stream. The next ``warmup_ts - 1``
    iterations follow Thompson samples of the embedding posterior; after
    that a boosted residual ensemble (early-stopped on a 70/30 split) is
    stacked on the sampled meta logit and the composite probability is
    maximized.
    """

    def __init__(self, model: MetaClassifier, gamma: float = 1.0 / 3.0,
                 warmup_ts: int = 5, n_estimators: int = 100,
                 learning_rate: float = 0.1, max_depth: int = 3,
                 min_samples_split: int = 2, min_samples_leaf: int = 1,
                 n_acq_samples: int = N_ACQ_SAMPLES, scale_free: bool = True):
        self.model = model
        self.gamma = gamma
        self.warmup_ts = warmup_ts
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.min_samples_split = min_samples_split
        self.min_samples_leaf = min_samples_leaf
        self.n_acq_samples = n_acq_samples
        self.scale_free = scale_free

    def _gbt_params(self) -> dict:
        return {
            "n_estimators": self.n_estimators,
            "learning_rate": self.learning_rate,
            "max_depth": self.max_depth,
            "min_samples_split": self.min_samples_split,
            "min_samples_leaf": self.min_samples_leaf,
        }

    def propose(self, history: BoHistory, space: SearchSpace, rng):
        if space.encoded_dim != self.model.input_dim_:
            raise ValueError(
                f"space encodes to {space.encoded_dim} dims, model wants {self.model.input_dim_}"
            )
        iteration = len(history) + 1
        if iteration == 1:
            init_rng = np.random.default_rng(_INIT_CANDIDATE_SEED)
            candidates = space.sample_encoded(init_rng, self.n_acq_samples)
            point = maximize_acquisition(
                lambda X: sigmoid(self.model.predict_logit(X)), space, init_rng,
                candidates=candidates,
            )
            return point, "init"

        xs, ys = history.finite_data()
        if self.scale_free and len(ys):
            ys = rescale_objective(ys, self.gamma)
        z_hat, posterior_ok = self._thompson(xs, ys, rng)
        acq_logit = lambda X: self.model.predict_logit(X, z_hat)  # noqa: E731

        labeled = label_observations(ys, self.gamma) if len(ys) else None
        use_gbt = (
            iteration > self.warmup_ts
            and labeled is not None
            and len(np.unique(labeled.labels)) >= 2
        )
        candidates = space.sample_encoded(rng, self.n_acq_samples)
        if not use_gbt:
            point = maximize_acquisition(lambda X: sigmoid(acq_logit(X)), space, rng,
                                         candidates=candidates)
            return point, "ts"

        n_trees = estimate_n_trees(xs, labeled, acq_logit, rng, **self._gbt_params())
        params = dict(self._gbt_params(), n_estimators=n_trees)
        clf = GradientBoostedClassifier(**params).fit(xs, labeled, acq_logit)
        point = maximize_acquisition(clf.predict_proba, space, rng, candidates=candidates)
        return point, "ts+gb"

    def _thompson(self, xs, ys, rng) -> tuple[np.ndarray, bool]:
        try:
            posterior = adapt_posterior(self.model, xs, ys, self.gamma)
            return thompson_sample(posterior, rng), True
        except PosteriorError:
            warnings.warn("embedding posterior failed; falling back to a prior sample")
            d = self.model.shape_.feature_dim
            return check_rng(rng).standard_normal(d), False

    def propose_batch(self, history: BoHistory, space: SearchSpace, q: int, rng):
        """Synchronous parallel proposals from ``q`` independent Thompson samples."""
        if q < 1:
            raise ValueError("q must be >= 1")
        xs, ys = history.finite_data()
        if self.scale_free and len(ys):
            ys = rescale_objective(ys, self.gamma)
        points = []
        for _ in range(q):
            z_hat, _ = self._thompson(xs, ys, rng)
            candidates = space.sample_encoded(rng, self.n_acq_samples)
            points.append(
                maximize_acquisition(
                    lambda X: sigmoid(self.model.predict_logit(X, z_hat)), space, rng,
                    candidates=candidates,
                )
            )
        return points


def run_bo(objective: Callable[[np.ndarray], float], space: SearchSpace, strategy,
           budget: int, seed) -> BoHistory:
    """Sequential propose/evaluate/append loop, deterministic given the seed.

    Non-finite objective values are recorded in the history (and treated as
    +inf by the incumbent trace) but never reach the models.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    rng = check_rng(seed)
    history = BoHistory()
    for _ in range(budget):
        point, kind = strategy.propose(history, space, rng)
        y = float(objective(point))
        history.append(point, y, kind)
    return history
