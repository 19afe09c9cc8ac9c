"""Experiment orchestration: seeded multi-run protocols, aggregation, export.

Every random stream is derived from the base seed with a documented scheme
(SHA-256 over ``"{base_seed}:{role}:{seed_index}"``, truncated to 63 bits),
so adding a strategy to a config never perturbs the streams of the others
and whole reports are reproducible byte for byte.

Regret traces are computed from the noise-free objective values of the
selected points; strategies only ever observe the noisy values.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .benchmarks import (
    get_ensemble,
    load_tabular,
    noisy_objective,
    sample_meta_dataset,
    tabular_objective,
)
from .data import MetaDataset, load_meta_jsonl, normalized_regret
from .meta import MetaClassifier
from .strategies import (
    LfboBoundingBoxStrategy,
    LfboStrategy,
    MaliboStrategy,
    RandomSearchStrategy,
    run_bo,
)

SEED_SCHEME = "sha256('{base_seed}:{role}:{seed_index}') & (2**63 - 1)"

STRATEGY_NAMES = ("random", "lfbo", "lfbo-bb", "malibo")


def derive_seed(base_seed: int, role: str, index: int) -> int:
    digest = hashlib.sha256(f"{base_seed}:{role}:{index}".encode()).digest()
    return int.from_bytes(digest[:8], "big") & (2**63 - 1)


@dataclass
class ExperimentConfig:
    """Validated description of one benchmark run.

    ``benchmark`` is either ``{"family": ..., "noise": ..., "meta_tasks": ...,
    "meta_observations": ...}`` for synthetic ensembles or ``{"tabular": path,
    "meta_path": path}`` for grid benchmarks. ``strategies`` entries carry a
    ``name`` (one of random/lfbo/lfbo-bb/malibo), an optional display
    ``label`` and constructor overrides.
    """

    benchmark: dict
    strategies: list
    budget: int
    n_seeds: int
    base_seed: int = 0
    shared_meta: bool = False
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if self.n_seeds < 1:
            raise ValueError("n_seeds must be >= 1")
        if not self.strategies:
            raise ValueError("at least one strategy is required")
        seen = set()
        for entry in self.strategies:
            name = entry.get("name")
            if name not in STRATEGY_NAMES:
                raise ValueError(f"unknown strategy {name!r}; choose from {STRATEGY_NAMES}")
            label = entry.get("label", name)
            if label in seen:
                raise ValueError(f"duplicate strategy label {label!r}")
            seen.add(label)
        if ("family" in self.benchmark) == ("tabular" in self.benchmark):
            raise ValueError("benchmark must set exactly one of 'family' or 'tabular'")
        if "family" in self.benchmark:
            get_ensemble(self.benchmark["family"])

    @classmethod
    def from_dict(cls, payload: dict) -> "ExperimentConfig":
        known = {"benchmark", "strategies", "budget", "n_seeds", "base_seed",
                 "shared_meta", "meta"}
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**payload)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    @property
    def labels(self) -> list[str]:
        return [entry.get("label", entry["name"]) for entry in self.strategies]

    def needs_meta(self) -> bool:
        return any(entry["name"] in ("lfbo-bb", "malibo") for entry in self.strategies)


@dataclass
class RegretReport:
    labels: list
    incumbent: dict  # label -> (n_seeds, budget) noise-free incumbent values
    regret: dict  # label -> (n_seeds, budget) normalized regret
    errors: list
    config: dict
    seeds: dict

    def mean(self, label: str) -> np.ndarray:
        return np.nanmean(self.regret[label], axis=0)

    def stderr(self, label: str) -> np.ndarray:
        traces = self.regret[label]
        n = np.sum(np.isfinite(traces), axis=0)
        std = np.nanstd(traces, axis=0, ddof=1)
        return std / np.sqrt(np.maximum(n, 1))


def _strategy_params(entry: dict) -> dict:
    return {k: v for k, v in entry.items() if k not in ("name", "label")}


def _run_seed(cfg: ExperimentConfig, index: int) -> dict:
    """Full per-seed protocol: fresh data, fresh meta-training, one BO run
    per strategy. Returns per-label traces or error strings."""
    base = cfg.base_seed
    budget = cfg.budget
    bench = cfg.benchmark
    out: dict = {}

    if "family" in bench:
        ensemble = get_ensemble(bench["family"])
        space = ensemble.space()
        noise = float(bench.get("noise", 0.0))
        target_rng = np.random.default_rng(derive_seed(base, "target-task", index))
        target = ensemble.sample_task(target_rng)
        f_min, f_max = target.f_min, target.f_max
        true_objective = target.objective
    else:
        table = load_tabular(bench["tabular"])
        space = table.space
        noise = float(bench.get("noise", 0.0))
        true_objective = tabular_objective(table)
        f_min, f_max = table.f_min, table.f_max

    # meta data / meta training failures poison only the cells that need them
    meta_ds = None
    model = None
    meta_error = None
    if cfg.needs_meta():
        try:
            meta_index = 0 if cfg.shared_meta else index
            if "family" in bench:
                meta_rng = np.random.default_rng(derive_seed(base, "meta-data", meta_index))
                meta_ds = sample_meta_dataset(
                    ensemble,
                    int(bench.get("meta_tasks", 32)),
                    int(bench.get("meta_observations", 64)),
                    noise,
                    meta_rng,
                )
            else:
                if "meta_path" not in bench:
                    raise ValueError("tabular benchmark with meta strategies needs 'meta_path'")
                meta_ds = load_meta_jsonl(bench["meta_path"], space)
            if any(entry["name"] == "malibo" for entry in cfg.strategies):
                train_seed = derive_seed(base, "meta-train", meta_index)
                model = _fit_meta_model(meta_ds, dict(cfg.meta), train_seed, cfg.shared_meta)
        except Exception:  # noqa: BLE001
            meta_error = traceback.format_exc(limit=3)

    for entry in cfg.strategies:
        name = entry["name"]
        label = entry.get("label", name)
        if meta_error and name in ("lfbo-bb", "malibo"):
            out[label] = {
                "incumbent": np.full(budget, np.nan),
                "regret": np.full(budget, np.nan),
                "error": meta_error,
            }
            continue
        try:
            strategy = _build_strategy(name, _strategy_params(entry), model, meta_ds)
            if "family" in bench:
                noise_rng = np.random.default_rng(derive_seed(base, f"noise:{label}", index))
                objective = noisy_objective(target, noise, noise_rng)
            elif noise > 0:
                noise_rng = np.random.default_rng(derive_seed(base, f"noise:{label}", index))
                objective = lambda x, _rng=noise_rng: float(  # noqa: E731
                    true_objective(x) * (1.0 + noise * _rng.standard_normal())
                )
            else:
                objective = true_objective
            history = run_bo(objective, space, strategy, budget,
                             derive_seed(base, f"run:{label}", index))
            true_values = np.asarray([float(true_objective(e.x)) for e in history.entries])
            incumbent = np.minimum.accumulate(true_values)
            out[label] = {
                "incumbent": incumbent,
                "regret": normalized_regret(incumbent, f_min, f_max),
                "error": None,
            }
        except Exception:  # noqa: BLE001 - isolate per-cell failures
            out[label] = {
                "incumbent": np.full(budget, np.nan),
                "regret": np.full(budget, np.nan),
                "error": traceback.format_exc(limit=3),
            }
    return out


_META_MODEL_CACHE: dict = {}


def _fit_meta_model(meta_ds: MetaDataset, meta_params: dict, train_seed: int,
                    shared: bool) -> MetaClassifier:
    # under shared_meta the dataset content is a pure function of the derived
    # seed, so seed + params identify the model
    key = (train_seed, tuple(sorted(meta_params.items())))
    if shared and key in _META_MODEL_CACHE:
        return _META_MODEL_CACHE[key]
    model = MetaClassifier(**meta_params, seed=train_seed).fit(meta_ds)
    if shared:
        _META_MODEL_CACHE[key] = model
    return model


def _build_strategy(name: str, params: dict, model, meta_ds):
    if name == "random":
        return RandomSearchStrategy()
    if name == "lfbo":
        return LfboStrategy(**params)
    if name == "lfbo-bb":
        if meta_ds is None:
            raise ValueError("lfbo-bb requires meta data")
        return LfboBoundingBoxStrategy(meta_ds, **params)
    if name == "malibo":
        if model is None:
            raise ValueError("malibo requires a trained meta model")
        return MaliboStrategy(model, **params)
    raise ValueError(f"unknown strategy {name!r}")


def resolve_workers(max_workers: int | None = None) -> int:
    if max_workers is not None:
        return max(1, int(max_workers))
    env = os.environ.get("MALIBO_THREADS")
    return max(1, int(env)) if env else 1


def run_experiment(cfg: ExperimentConfig, max_workers: int | None = None) -> RegretReport:
    """Fan seeds over a worker pool and aggregate into a report.

    The reduce is an ordered collect, so worker count never changes results.
    """
    workers = resolve_workers(max_workers)
    indices = list(range(cfg.n_seeds))
    if workers == 1:
        per_seed = [_run_seed(cfg, i) for i in indices]
    else:
        with ProcessPoolExecutor(max_workers=min(workers, cfg.n_seeds)) as pool:
            per_seed = list(pool.map(_run_seed, [cfg] * cfg.n_seeds, indices))

    labels = cfg.labels
    incumbent = {lb: np.full((cfg.n_seeds, cfg.budget), np.nan) for lb in labels}
    regret = {lb: np.full((cfg.n_seeds, cfg.budget), np.nan) for lb in labels}
    errors = []
    for i, result in enumerate(per_seed):
        for label in labels:
            cell = result[label]
            incumbent[label][i] = cell["incumbent"]
            regret[label][i] = cell["regret"]
            if cell["error"]:
                errors.append({"strategy": label, "seed_index": i, "error": cell["error"]})
    seeds = {
        "scheme": SEED_SCHEME,
        "base_seed": cfg.base_seed,
        "run": {lb: [derive_seed(cfg.base_seed, f"run:{lb}", i) for i in indices]
                for lb in labels},
    }
    return RegretReport(labels, incumbent, regret, errors, asdict(cfg), seeds)


# -- export ------------------------------------------------------------------


def export_report(report: RegretReport, out_dir, log_x: bool = False) -> dict:
    """Write regret.csv, summary.csv, plot.svg and manifest.json.

    Floats are written with ``repr`` so re-parsing reproduces the report to
    the bit.
    """
    os.makedirs(out_dir, exist_ok=True)
    paths = {name: os.path.join(out_dir, name) for name in
             ("regret.csv", "summary.csv", "plot.svg", "manifest.json")}
    try:
        _write_regret_csv(report, paths["regret.csv"])
        _write_summary_csv(report, paths["summary.csv"])
        _write_plot_svg(report, paths["plot.svg"], log_x=log_x)
        with open(paths["manifest.json"], "w") as fh:
            json.dump(
                {
                    "config": report.config,
                    "seeds": report.seeds,
                    "errors": report.errors,
                    "versions": _versions(),
                },
                fh,
                sort_keys=True,
                indent=2,
            )
            fh.write("\n")
    except OSError as exc:
        raise OSError(f"failed writing report to {out_dir}: {exc}") from exc
    return paths


def _versions() -> dict:
    import matplotlib
    import scipy

    return {
        "python": sys.version.split()[0],
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "matplotlib": matplotlib.__version__,
        "malibo": __version__,
    }


def _write_regret_csv(report: RegretReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "seed", "iteration", "incumbent_y", "normalized_regret"])
        for label in report.labels:
            inc = report.incumbent[label]
            reg = report.regret[label]
            for seed in range(inc.shape[0]):
                for it in range(inc.shape[1]):
                    writer.writerow(
                        [label, seed, it + 1, repr(float(inc[seed, it])),
                         repr(float(reg[seed, it]))]
                    )


def _write_summary_csv(report: RegretReport, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "iteration", "mean", "stderr"])
        for label in report.labels:
            mean = report.mean(label)
            err = report.stderr(label)
            for it in range(mean.size):
                writer.writerow([label, it + 1, repr(float(mean[it])), repr(float(err[it]))])


def _write_plot_svg(report: RegretReport, path, log_x: bool = False) -> None:
    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    iterations = np.arange(1, report.config["budget"] + 1)
    for label in report.labels:
        mean = report.mean(label)
        err = report.stderr(label)
        ax.plot(iterations, mean, label=label)
        ax.fill_between(iterations, mean - err, mean + err, alpha=0.25)
    if log_x:
        ax.set_xscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("normalized regret")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def read_regret_csv(path) -> dict:
    """Parse regret.csv back into per-strategy (seeds, iterations) arrays."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                rows.append(
                    (row["strategy"], int(row["seed"]), int(row["iteration"]),
                     float(row["incumbent_y"]), float(row["normalized_regret"]))
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ValueError(f"{path}:{lineno}: malformed row: {exc}") from exc
    if not rows:
        raise ValueError(f"{path}: no data rows")
    out: dict = {}
    for label, seed, it, inc, reg in rows:
        entry = out.setdefault(label, {"cells": {}})
        entry["cells"][(seed, it)] = (inc, reg)
    for label, entry in out.items():
        seeds = 1 + max(k[0] for k in entry["cells"])
        its = max(k[1] for k in entry["cells"])
        incumbent = np.full((seeds, its), np.nan)
        regret = np.full((seeds, its), np.nan)
        for (seed, it), (inc, reg) in entry["cells"].items():
            incumbent[seed, it - 1] = inc
            regret[seed, it - 1] = reg
        out[label] = {"incumbent": incumbent, "regret": regret}
    return out
