"""Synthetic function ensembles, multiplicative noise, and tabular benchmarks.

Each ensemble draws task parameters from fixed uniform ranges; a sampled
task carries a vectorized objective over encoded points together with
grid-estimated extrema for regret normalization (estimates, not exact).
Tabular benchmarks store a full grid of offline evaluations with exact
extrema.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .data import MetaDataset, TaskDataset
from .spaces import Categorical, Continuous, Integer, SearchSpace
from .validation import check_rng


@dataclass(frozen=True)
class SyntheticTask:
    """One sampled ensemble member; extrema are dense-grid estimates."""

    objective: Callable[[np.ndarray], np.ndarray]
    f_min: float
    f_max: float
    params: dict
    space: SearchSpace


class FunctionEnsemble:
    """Family of related tasks indexed by uniformly distributed parameters."""

    name: str = ""
    param_ranges: dict[str, tuple[float, float]] = {}
    grid_points_per_dim: int = 10001

    def space(self) -> SearchSpace:
        raise NotImplementedError

    def evaluate(self, params: dict, x_raw: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample_params(self, rng) -> dict:
        rng = check_rng(rng)
        return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in self.param_ranges.items()}

    def _grid(self) -> np.ndarray:
        space = self.space()
        axes = [np.linspace(d.lo, d.hi, self.grid_points_per_dim) for d in space.dims]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def sample_task(self, rng) -> SyntheticTask:
        params = self.sample_params(rng)
        values = self.evaluate(params, self._grid())
        space = self.space()
        lows = np.asarray([d.lo for d in space.dims])
        spans = np.asarray([d.hi - d.lo for d in space.dims])

        def objective(x_encoded: np.ndarray) -> np.ndarray:
            x = np.atleast_2d(np.asarray(x_encoded, dtype=np.float64))
            raw = lows + x * spans
            y = self.evaluate(params, raw)
            return float(y[0]) if np.asarray(x_encoded).ndim == 1 else y

        return SyntheticTask(objective, float(values.min()), float(values.max()),
                             params, space)


class ForresterEnsemble(FunctionEnsemble):
    """1-D family with one local and one global minimum."""

    name = "forrester"
    param_ranges = {"a": (0.2, 3.0), "b": (-5.0, 15.0), "c": (-5.0, 5.0)}
    grid_points_per_dim = 10001

    def space(self) -> SearchSpace:
        return SearchSpace([Continuous(0.0, 1.0)])

    def evaluate(self, params: dict, x_raw: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x_raw)[:, 0]
        a, b, c = params["a"], params["b"], params["c"]
        return a * (6 * x - 2) ** 2 * np.sin(12 * x - 4) + b * (x - 0.5) - c


class QuadraticEnsemble(FunctionEnsemble):
    """1-D parabolas with broadly distributed vertex locations."""

    name = "quadratic"
    param_ranges = {"a": (0.5, 1.5), "b": (-0.9, 0.9), "c": (-1.0, 1.0)}
    grid_points_per_dim = 10001

    def space(self) -> SearchSpace:
        return SearchSpace([Continuous(0.0, 1.0)])

    def evaluate(self, params: dict, x_raw: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x_raw)[:, 0]
        a, b, c = params["a"], params["b"], params["c"]
        return (a * (x - b)) ** 2 - c


class BraninEnsemble(FunctionEnsemble):
    name = "branin"
    param_ranges = {
        "a": (0.5, 1.5),
        "b": (0.1, 0.15),
        "c": (1.0, 2.0),
        "r": (5.0, 7.0),
        "s": (8.0, 12.0),
        "t": (0.03, 0.05),
    }
    grid_points_per_dim = 101  # 101^2 grid points for the extrema estimate

    def space(self) -> SearchSpace:
        return SearchSpace([Continuous(-5.0, 10.0), Continuous(0.0, 15.0)])

    def evaluate(self, params: dict, x_raw: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x_raw)
        x1, x2 = x[:, 0], x[:, 1]
        a, b, c = params["a"], params["b"], params["c"]
        r, s, t = params["r"], params["s"], params["t"]
        return a * (x2 - b * x1**2 + c * x1 - r) ** 2 + s * (1 - t) * np.cos(x1) + s


HARTMANN3_A = np.asarray(
    [[3.0, 10.0, 30.0], [0.1, 10.0, 35.0], [3.0, 10.0, 30.0], [0.1, 10.0, 35.0]]
)
HARTMANN3_P = 1e-4 * np.asarray(
    [
        [3689.0, 1170.0, 2673.0],
        [4699.0, 4387.0, 7470.0],
        [1091.0, 8732.0, 5547.0],
        [381.0, 5743.0, 8828.0],
    ]
)


class Hartmann3Ensemble(FunctionEnsemble):
    """3-D family with four local minima of task-dependent depths."""

    name = "hartmann3"
    param_ranges = {
        "alpha1": (0.0, 2.0),
        "alpha2": (0.0, 2.0),
        "alpha3": (2.0, 4.0),
        "alpha4": (2.0, 4.0),
    }
    grid_points_per_dim = 47  # 47^3 > 1e5 grid points

    def space(self) -> SearchSpace:
        return SearchSpace([Continuous(0.0, 1.0)] * 3)

    def evaluate(self, params: dict, x_raw: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x_raw)
        alpha = np.asarray([params[f"alpha{i}"] for i in range(1, 5)])
        sq = (x[:, None, :] - HARTMANN3_P[None, :, :]) ** 2
        inner = np.sum(HARTMANN3_A[None, :, :] * sq, axis=2)
        return -np.sum(alpha[None, :] * np.exp(-inner), axis=1)


ENSEMBLES = {
    cls.name: cls
    for cls in (ForresterEnsemble, QuadraticEnsemble, BraninEnsemble, Hartmann3Ensemble)
}


def get_ensemble(name: str) -> FunctionEnsemble:
    try:
        return ENSEMBLES[name]()
    except KeyError:
        raise ValueError(f"unknown ensemble {name!r}; choose from {sorted(ENSEMBLES)}") from None


def apply_noise(y, epsilon: float, rng) -> np.ndarray | float:
    """Multiplicative corruption ``y * (1 + epsilon * n)`` with n ~ N(0, 1)."""
    if epsilon < 0:
        raise ValueError("noise level must be non-negative")
    y_arr = np.asarray(y, dtype=np.float64)
    if epsilon == 0:
        return y if np.ndim(y) else float(y_arr)
    noisy = y_arr * (1.0 + epsilon * check_rng(rng).standard_normal(y_arr.shape))
    return noisy if np.ndim(y) else float(noisy)


def noisy_objective(task: SyntheticTask, epsilon: float, rng) -> Callable[[np.ndarray], float]:
    rng = check_rng(rng)

    def objective(x_encoded):
        return apply_noise(task.objective(x_encoded), epsilon, rng)

    return objective


def sample_meta_dataset(ensemble: FunctionEnsemble, n_tasks: int, n_observations: int,
                        epsilon: float, rng) -> MetaDataset:
    """Uniform noisy observations from freshly sampled related tasks."""
    if n_tasks < 1 or n_observations < 1:
        raise ValueError("need at least one task and one observation per task")
    rng = check_rng(rng)
    space = ensemble.space()
    tasks = []
    for task_id in range(n_tasks):
        task = ensemble.sample_task(rng)
        X = space.sample_encoded(rng, n_observations)
        y = apply_noise(task.objective(X), epsilon, rng)
        tasks.append(TaskDataset(task_id, X, np.asarray(y)))
    return MetaDataset(tasks)


# -- tabular benchmarks ------------------------------------------------------


@dataclass(frozen=True)
class TabularBenchmark:
    """Complete grid of offline evaluations with exact extrema."""

    space: SearchSpace
    table: dict  # grid-index tuple -> objective value
    f_min: float
    f_max: float


def _grid_key(space: SearchSpace, raw_point) -> tuple[int, ...]:
    key = []
    for value, dim in zip(raw_point, space.dims):
        if isinstance(dim, Integer):
            key.append(dim.levels.index(int(value)))
        elif isinstance(dim, Categorical):
            key.append(int(value))
        else:
            raise ValueError("tabular benchmarks require discrete (grid) dimensions")
    return tuple(key)


def _grid_cardinality(space: SearchSpace) -> int:
    total = 1
    for dim in space.dims:
        total *= len(dim.levels) if isinstance(dim, Integer) else dim.n_choices
    return total


def load_tabular(path) -> TabularBenchmark:
    """Read a JSON (or headered CSV) grid benchmark, rejecting partial grids."""
    path = str(path)
    if path.endswith(".csv"):
        space, rows = _read_tabular_csv(path)
    else:
        with open(path) as fh:
            payload = json.load(fh)
        try:
            space = SearchSpace.from_descriptor(payload["space"])
            rows = [(row[0], float(row[1])) for row in payload["rows"]]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise ValueError(f"{path}: malformed tabular benchmark: {exc}") from exc
    table: dict = {}
    for i, (raw, y) in enumerate(rows, start=1):
        try:
            key = _grid_key(space, raw)
        except ValueError as exc:
            raise ValueError(f"{path}: row {i}: {exc}") from exc
        if key in table:
            raise ValueError(f"{path}: row {i}: duplicate grid point {raw}")
        if not math.isfinite(y):
            raise ValueError(f"{path}: row {i}: non-finite objective")
        table[key] = y
    expected = _grid_cardinality(space)
    if len(table) != expected:
        raise ValueError(
            f"{path}: grid incomplete: {len(table)} of {expected} points present"
        )
    values = np.asarray(list(table.values()))
    return TabularBenchmark(space, table, float(values.min()), float(values.max()))


def _read_tabular_csv(path):
    """CSV variant: header row, integer-coded config columns, objective last."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise ValueError(f"{path}: CSV needs a header and at least two columns")
        raw_rows = []
        for i, row in enumerate(reader, start=2):
            if not row:
                continue
            try:
                config = [int(v) for v in row[:-1]]
                y = float(row[-1])
            except ValueError as exc:
                raise ValueError(f"{path}: line {i}: {exc}") from exc
            raw_rows.append((config, y))
    if not raw_rows:
        raise ValueError(f"{path}: no data rows")
    n_dims = len(raw_rows[0][0])
    dims = []
    for j in range(n_dims):
        levels = sorted({cfg[j] for cfg, _ in raw_rows})
        dims.append(Integer.from_levels(levels) if len(levels) > 1 else Integer(levels[0], levels[0]))
    return SearchSpace(dims), raw_rows


def lookup(bench: TabularBenchmark, encoded_point) -> float:
    """Objective of the nearest grid point (midpoints resolve to lower index)."""
    enc = np.asarray(encoded_point, dtype=np.float64)
    key = []
    offset = 0
    for dim in bench.space.dims:
        if isinstance(dim, Integer):
            k = len(dim.levels)
            u = min(max(float(enc[offset]), 0.0), 1.0)
            key.append(int(math.ceil(u * (k - 1) - 0.5)) if k > 1 else 0)
        else:
            block = enc[offset : offset + dim.n_choices]
            key.append(int(np.argmax(block)))
        offset += dim.encoded_width
    return bench.table[tuple(key)]


def tabular_objective(bench: TabularBenchmark) -> Callable[[np.ndarray], float]:
    def objective(x_encoded):
        x = np.atleast_2d(np.asarray(x_encoded, dtype=np.float64))
        values = np.asarray([lookup(bench, row) for row in x])
        return float(values[0]) if np.asarray(x_encoded).ndim == 1 else values

    return objective
