"""Relation-extraction data augmentation toolkit.

Per-relation-type generator adaptation, filtered synthetic data, ensembles
over gold+synthetic training sets, imbalance baselines, evaluation with
paired significance testing, and a seeded experiment harness.
"""

from .augment import (
    Ensemble,
    EnsembleConfig,
    SyntheticPool,
    build_pool,
    subsample_pool,
    train_balanced_bagging,
    train_class_weighting,
    train_dare,
    train_gold_only,
    vote,
)
from .classifier import (
    ClassWeights,
    LinearTextClassifier,
    PredictionRule,
    TrainConfig,
    compute_class_weights,
    featurize,
    predict,
    train_classifier,
    tune_threshold,
)
from .corpus import (
    Dataset,
    DatasetError,
    RelationInstance,
    RelationSchema,
    load_dataset,
    partition_by_class,
    split_dev,
    subsample_positives,
    write_dataset,
)
from .generator import (
    AdaptedLM,
    BuiltinGenerator,
    GeneratorParams,
    NGramLM,
    adapt,
    fit_base,
    generate_filtered,
    joint_conditional_fit,
    log_likelihood,
    sample,
)
from .metrics import EvalResult, McNemarResult, aggregate_runs, evaluate, mcnemar

__version__ = "0.1.0"

__all__ = [
    "AdaptedLM",
    "BuiltinGenerator",
    "ClassWeights",
    "Dataset",
    "DatasetError",
    "Ensemble",
    "EnsembleConfig",
    "EvalResult",
    "GeneratorParams",
    "LinearTextClassifier",
    "McNemarResult",
    "NGramLM",
    "PredictionRule",
    "RelationInstance",
    "RelationSchema",
    "SyntheticPool",
    "TrainConfig",
    "adapt",
    "aggregate_runs",
    "build_pool",
    "compute_class_weights",
    "evaluate",
    "featurize",
    "fit_base",
    "generate_filtered",
    "joint_conditional_fit",
    "load_dataset",
    "log_likelihood",
    "mcnemar",
    "partition_by_class",
    "predict",
    "sample",
    "split_dev",
    "subsample_pool",
    "subsample_positives",
    "train_balanced_bagging",
    "train_class_weighting",
    "train_classifier",
    "train_dare",
    "train_gold_only",
    "tune_threshold",
    "vote",
    "write_dataset",
]
