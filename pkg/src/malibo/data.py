"""Observation containers, quantile labeling, regret metric, bounding box.

Observations are stored minimization-style: lower ``y`` is better. Labels
follow the good/bad split at the empirical gamma-quantile threshold, and
weights are the raw improvements ``max(tau - y, 0)`` (no normalization; the
boosted-tree learner and the BO strategies handle scale explicitly).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .spaces import BOX_EPSILON, Continuous, SearchSpace
from .validation import as_float_array, check_consistent_length, check_unit_cube


@dataclass(frozen=True)
class TaskDataset:
    """Observations collected on a single task, in encoded coordinates."""

    task_id: int
    x: np.ndarray  # (n, encoded_dim)
    y: np.ndarray  # (n,)

    def __post_init__(self):
        x = check_unit_cube(np.atleast_2d(np.asarray(self.x, dtype=np.float64)), name="x")
        y = as_float_array(self.y, "y", ndim=1)
        check_consistent_length(x, y)
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return len(self.y)


@dataclass(frozen=True)
class MetaDataset:
    """Union of related-task datasets used for meta-training."""

    tasks: tuple[TaskDataset, ...]

    def __init__(self, tasks: Iterable[TaskDataset]):
        tasks = tuple(tasks)
        ids = [t.task_id for t in tasks]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate task ids: {ids}")
        object.__setattr__(self, "tasks", tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    def __iter__(self):
        return iter(self.tasks)

    @property
    def encoded_dim(self) -> int:
        if not self.tasks:
            raise ValueError("empty meta-dataset")
        return self.tasks[0].x.shape[1]


@dataclass(frozen=True)
class LabeledSet:
    """Good/bad labels and improvement weights at a fixed threshold.

    Invariants: ``labels[i] == 1`` iff ``y[i] <= tau``;
    ``weights[i] == max(tau - y[i], 0)``, so a positive weight implies a
    positive label.
    """

    tau: float
    labels: np.ndarray  # (n,) of {0, 1}
    weights: np.ndarray  # (n,) of float >= 0
    gamma: float = field(default=math.nan)

    def __post_init__(self):
        object.__setattr__(self, "labels", np.asarray(self.labels, dtype=np.int64))
        object.__setattr__(self, "weights", as_float_array(self.weights, "weights", ndim=1))

    def __len__(self) -> int:
        return len(self.labels)

    def scaled(self, factor: float) -> "LabeledSet":
        """Return a copy with uniformly rescaled weights (labels unchanged)."""
        if not (np.isfinite(factor) and factor > 0):
            raise ValueError(f"scale factor must be positive, got {factor}")
        return LabeledSet(self.tau, self.labels, self.weights * factor, self.gamma)


def compute_threshold(ys: Sequence[float], gamma: float) -> float:
    """Empirical gamma-quantile: the ceil(gamma*n)-th smallest observation.

    The threshold is always an observed value, so the good class is never
    empty and at least one weight is exactly zero.
    """
    ys = as_float_array(ys, "ys", ndim=1)
    if ys.size == 0:
        raise ValueError("cannot compute a threshold of an empty sample")
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    k = int(math.ceil(gamma * ys.size))
    k = min(max(k, 1), ys.size)
    return float(np.partition(ys, k - 1)[k - 1])


def label_and_weight(ys: Sequence[float], tau: float, gamma: float = math.nan) -> LabeledSet:
    """Label observations against ``tau`` and attach improvement weights."""
    ys = as_float_array(ys, "ys", ndim=1)
    labels = (ys <= tau).astype(np.int64)
    weights = np.maximum(tau - ys, 0.0)
    return LabeledSet(float(tau), labels, weights, gamma)


def label_observations(ys: Sequence[float], gamma: float) -> LabeledSet:
    """Threshold at the empirical gamma-quantile, then label and weight."""
    tau = compute_threshold(ys, gamma)
    return label_and_weight(ys, tau, gamma)


def normalized_regret(best_ys: Sequence[float], f_min: float, f_max: float) -> np.ndarray:
    """Incumbent gap normalized by the task's objective range.

    ``best_ys`` is an incumbent trace; the running minimum is applied, so a
    raw evaluation trace is accepted as well.
    """
    if not f_min < f_max:
        raise ValueError(f"need f_min < f_max, got {f_min} >= {f_max}")
    trace = np.asarray(best_ys, dtype=np.float64)
    incumbent = np.minimum.accumulate(trace)
    return (incumbent - f_min) / (f_max - f_min)


def bounding_box(meta: MetaDataset, top_m: int = 1) -> SearchSpace:
    """Axis-aligned hull of each task's ``top_m`` best points, in encoded coords.

    Degenerate dimensions (min == max) are expanded by ``BOX_EPSILON`` and
    clipped to [0, 1]. Returns a search space of continuous dimensions over
    the encoded coordinates of the original space.
    """
    if len(meta) == 0:
        raise ValueError("empty meta-dataset")
    if top_m < 1:
        raise ValueError("top_m must be >= 1")
    best_points = []
    for task in meta:
        if len(task) < top_m:
            raise ValueError(f"task {task.task_id} has fewer than top_m={top_m} observations")
        order = np.argsort(task.y, kind="stable")[:top_m]
        best_points.append(task.x[order])
    pts = np.vstack(best_points)
    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    degenerate = hi - lo <= 0
    lo[degenerate] = np.clip(lo[degenerate] - BOX_EPSILON, 0.0, 1.0)
    hi[degenerate] = np.clip(hi[degenerate] + BOX_EPSILON, 0.0, 1.0)
    return SearchSpace([Continuous(float(a), float(b)) for a, b in zip(lo, hi)])


# -- meta-dataset file format (JSON lines, one record per task) -----------


def save_meta_jsonl(meta: MetaDataset, path, space: SearchSpace | None = None) -> None:
    """Write one ``{"task_id": ..., "obs": [[x...], y]}`` record per line.

    Points are written raw (decoded) when a space is given, otherwise in
    encoded coordinates.
    """
    with open(path, "w") as fh:
        for task in meta:
            obs = []
            for xi, yi in zip(task.x, task.y):
                raw = space.decode(xi) if space is not None else [float(v) for v in xi]
                obs.append([list(raw), float(yi)])
            fh.write(json.dumps({"task_id": task.task_id, "obs": obs}) + "\n")


def load_meta_jsonl(path, space: SearchSpace | None = None) -> MetaDataset:
    """Parse the JSON-lines task format; encodes points when a space is given.

    Without a space the point coordinates must already lie in [0, 1].
    """
    tasks = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
                task_id = int(record["task_id"])
                raw_obs = record["obs"]
                xs = []
                ys = []
                for pair in raw_obs:
                    point, y = pair
                    xs.append(space.encode(point) if space is not None else point)
                    ys.append(float(y))
            except (KeyError, TypeError, ValueError, json.JSONDecodeError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed task record: {exc}") from exc
            if not xs:
                raise ValueError(f"{path}:{lineno}: task {task_id} has no observations")
            tasks.append(TaskDataset(task_id, np.asarray(xs, dtype=np.float64), np.asarray(ys)))
    if not tasks:
        raise ValueError(f"{path}: no task records found")
    return MetaDataset(tasks)
