"""Command-line interface.

Subcommands: ``meta-train`` (dataset -> checkpoint), ``optimize``
(checkpoint/benchmark -> history CSV), ``benchmark`` (full experiment run),
``report`` (CSV -> summary/plot), ``selftest`` (oracle suites).

Exit codes: 0 success, 1 validation error (bad flags, files, configs),
2 runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from .benchmarks import get_ensemble, load_tabular, noisy_objective, tabular_objective
from .data import load_meta_jsonl, normalized_regret
from .experiment import (
    ExperimentConfig,
    derive_seed,
    export_report,
    read_regret_csv,
    run_experiment,
)
from .meta import MetaClassifier, load_checkpoint, save_checkpoint
from .spaces import SearchSpace
from .strategies import (
    LfboBoundingBoxStrategy,
    LfboStrategy,
    MaliboStrategy,
    RandomSearchStrategy,
    run_bo,
)


class _Parser(argparse.ArgumentParser):
    """argparse that exits with code 1 on usage/validation problems."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="malibo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_train = sub.add_parser("meta-train", help="train a checkpoint from a meta dataset")
    p_train.add_argument("--data", required=True, help="meta dataset (JSON lines)")
    p_train.add_argument("--space", help="search-space descriptor JSON; omit if the "
                                         "dataset is already unit-encoded")
    p_train.add_argument("--out", required=True, help="checkpoint path")
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--epochs", type=int, default=2048)
    p_train.add_argument("--batch-size", type=int, default=256)
    p_train.add_argument("--gamma", type=float, default=1.0 / 3.0)
    p_train.add_argument("--feature-dim", type=int, default=50)
    p_train.add_argument("--reg-weight", type=float, default=0.1)
    p_train.add_argument("--patience", type=int, default=64)

    p_opt = sub.add_parser("optimize", help="run one optimization and dump its history")
    p_opt.add_argument("--strategy", required=True,
                       choices=["random", "lfbo", "lfbo-bb", "malibo"])
    p_opt.add_argument("--budget", type=int, required=True)
    p_opt.add_argument("--seed", type=int, default=0)
    p_opt.add_argument("--out", required=True, help="history CSV path")
    p_opt.add_argument("--family", help="synthetic ensemble name")
    p_opt.add_argument("--task-seed", type=int, default=0, help="synthetic task draw")
    p_opt.add_argument("--noise", type=float, default=0.0)
    p_opt.add_argument("--tabular", help="tabular benchmark path")
    p_opt.add_argument("--checkpoint", help="meta-model checkpoint (malibo)")
    p_opt.add_argument("--meta", help="meta dataset JSONL (lfbo-bb)")

    p_bench = sub.add_parser("benchmark", help="run a full experiment config")
    p_bench.add_argument("--config", required=True, help="experiment config JSON")
    p_bench.add_argument("--out", required=True, help="output directory")
    p_bench.add_argument("--log-x", action="store_true", help="log-scaled iteration axis")
    p_bench.add_argument("--workers", type=int, help="override MALIBO_THREADS")
    p_bench.add_argument("--paper-scale", action="store_true",
                         help="full-scale protocol: 100 seeds")

    p_rep = sub.add_parser("report", help="rebuild summary and plot from regret.csv")
    p_rep.add_argument("--regret", required=True)
    p_rep.add_argument("--out", required=True)
    p_rep.add_argument("--log-x", action="store_true")

    sub.add_parser("selftest", help="run the built-in oracle suites")
    return parser


def _cmd_meta_train(args) -> int:
    space = SearchSpace.from_json(args.space) if args.space else None
    meta = load_meta_jsonl(args.data, space)
    model = MetaClassifier(
        feature_dim=args.feature_dim,
        reg_weight=args.reg_weight,
        gamma=args.gamma,
        epochs=args.epochs,
        batch_size=args.batch_size,
        patience=args.patience,
        seed=args.seed,
    ).fit(meta)
    save_checkpoint(model, args.out)
    report = model.training_report_
    print(f"trained on {report['n_tasks']} tasks "
          f"({report['n_parameters']} parameters, "
          f"best epoch {report['best_epoch']} of {report['epochs_run']}); "
          f"checkpoint written to {args.out}")
    return 0


def _cmd_optimize(args) -> int:
    if bool(args.family) == bool(args.tabular):
        raise ValueError("pass exactly one of --family or --tabular")
    if args.family:
        ensemble = get_ensemble(args.family)
        space = ensemble.space()
        task = ensemble.sample_task(np.random.default_rng(args.task_seed))
        true_objective = task.objective
        f_min, f_max = task.f_min, task.f_max
        noise_rng = np.random.default_rng(derive_seed(args.seed, "noise", 0))
        objective = noisy_objective(task, args.noise, noise_rng)
    else:
        bench = load_tabular(args.tabular)
        space = bench.space
        true_objective = tabular_objective(bench)
        f_min, f_max = bench.f_min, bench.f_max
        objective = true_objective

    if args.strategy == "random":
        strategy = RandomSearchStrategy()
    elif args.strategy == "lfbo":
        strategy = LfboStrategy()
    elif args.strategy == "lfbo-bb":
        if not args.meta:
            raise ValueError("lfbo-bb needs --meta (a meta dataset JSONL)")
        strategy = LfboBoundingBoxStrategy(load_meta_jsonl(args.meta, space))
    else:
        if not args.checkpoint:
            raise ValueError("malibo needs --checkpoint")
        strategy = MaliboStrategy(load_checkpoint(args.checkpoint))

    history = run_bo(objective, space, strategy, args.budget, args.seed)
    true_values = np.asarray([float(true_objective(e.x)) for e in history.entries])
    incumbent = np.minimum.accumulate(true_values)
    regret = normalized_regret(incumbent, f_min, f_max)
    with open(args.out, "w", newline="") as fh:
        writer = csv.writer(fh)
        dim = space.encoded_dim
        writer.writerow(["iteration", "kind", "y", "incumbent_y", "normalized_regret"]
                        + [f"x{i}" for i in range(dim)])
        for entry, inc, reg in zip(history.entries, incumbent, regret):
            writer.writerow([entry.iteration, entry.kind, repr(entry.y), repr(float(inc)),
                             repr(float(reg))] + [repr(float(v)) for v in entry.x])
    print(f"{args.strategy}: best objective {incumbent[-1]!r} after {args.budget} "
          f"iterations; history written to {args.out}")
    return 0


def _cmd_benchmark(args) -> int:
    cfg = ExperimentConfig.from_json(args.config)
    if args.paper_scale:
        cfg.n_seeds = 100
    report = run_experiment(cfg, max_workers=args.workers)
    paths = export_report(report, args.out, log_x=args.log_x)
    for path in paths.values():
        print(f"wrote {path}")
    if report.errors:
        print(f"{len(report.errors)} cells failed; see manifest.json", file=sys.stderr)
    return 0


def _cmd_report(args) -> int:
    data = read_regret_csv(args.regret)
    import os

    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "summary.csv"), "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["strategy", "iteration", "mean", "stderr"])
        for label, arrays in data.items():
            regret = arrays["regret"]
            n = np.sum(np.isfinite(regret), axis=0)
            mean = np.nanmean(regret, axis=0)
            err = np.nanstd(regret, axis=0, ddof=1) / np.sqrt(np.maximum(n, 1))
            for it in range(mean.size):
                writer.writerow([label, it + 1, repr(float(mean[it])), repr(float(err[it]))])

    import matplotlib

    matplotlib.use("Agg", force=False)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6, 4))
    for label, arrays in data.items():
        regret = arrays["regret"]
        iterations = np.arange(1, regret.shape[1] + 1)
        n = np.sum(np.isfinite(regret), axis=0)
        mean = np.nanmean(regret, axis=0)
        err = np.nanstd(regret, axis=0, ddof=1) / np.sqrt(np.maximum(n, 1))
        ax.plot(iterations, mean, label=label)
        ax.fill_between(iterations, mean - err, mean + err, alpha=0.25)
    if args.log_x:
        ax.set_xscale("log")
    ax.set_xlabel("iteration")
    ax.set_ylabel("normalized regret")
    ax.legend()
    fig.tight_layout()
    fig.savefig(os.path.join(args.out, "plot.svg"), format="svg")
    plt.close(fig)
    print(f"wrote {os.path.join(args.out, 'summary.csv')}")
    print(f"wrote {os.path.join(args.out, 'plot.svg')}")
    return 0


def _cmd_selftest(_args) -> int:
    from .selftest import run_selftest

    return 0 if run_selftest() else 2


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    handlers = {
        "meta-train": _cmd_meta_train,
        "optimize": _cmd_optimize,
        "benchmark": _cmd_benchmark,
        "report": _cmd_report,
        "selftest": _cmd_selftest,
    }
    try:
        return handlers[args.command](args)
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - surface runtime failures as exit 2
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
