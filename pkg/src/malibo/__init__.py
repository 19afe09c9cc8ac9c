"""Meta-learning likelihood-free Bayesian optimization toolkit."""

__version__ = "0.1.0"

from .adapt import (
    TaskPosterior,
    adapt_posterior,
    laplace_posterior,
    map_estimate,
    probit_predict,
    probit_sigmoid_gaussian,
    thompson_sample,
)
from .data import (
    LabeledSet,
    MetaDataset,
    TaskDataset,
    bounding_box,
    compute_threshold,
    label_and_weight,
    label_observations,
    load_meta_jsonl,
    normalized_regret,
    save_meta_jsonl,
)
from .experiment import ExperimentConfig, RegretReport, export_report, run_experiment
from .gbt import GradientBoostedClassifier, estimate_n_trees
from .meta import MetaClassifier, calibrate_coefficients, load_checkpoint, save_checkpoint
from .spaces import Categorical, Continuous, Integer, SearchSpace, unit_space
from .strategies import (
    BoHistory,
    LfboBoundingBoxStrategy,
    LfboStrategy,
    MaliboStrategy,
    RandomSearchStrategy,
    maximize_acquisition,
    run_bo,
)

__all__ = [
    "BoHistory",
    "Categorical",
    "Continuous",
    "ExperimentConfig",
    "GradientBoostedClassifier",
    "Integer",
    "LabeledSet",
    "LfboBoundingBoxStrategy",
    "LfboStrategy",
    "MaliboStrategy",
    "MetaClassifier",
    "MetaDataset",
    "RandomSearchStrategy",
    "RegretReport",
    "SearchSpace",
    "TaskDataset",
    "TaskPosterior",
    "adapt_posterior",
    "bounding_box",
    "calibrate_coefficients",
    "compute_threshold",
    "estimate_n_trees",
    "export_report",
    "label_and_weight",
    "label_observations",
    "laplace_posterior",
    "load_checkpoint",
    "load_meta_jsonl",
    "map_estimate",
    "maximize_acquisition",
    "normalized_regret",
    "probit_predict",
    "probit_sigmoid_gaussian",
    "run_bo",
    "run_experiment",
    "save_checkpoint",
    "save_meta_jsonl",
    "thompson_sample",
    "unit_space",
]
