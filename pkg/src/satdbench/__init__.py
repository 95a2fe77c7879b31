"""Self-admitted technical debt detection with class-balancing benchmarks."""

from .balance import (
    ADASYN,
    SMOTE,
    SVMSMOTE,
    BorderlineSMOTE,
    ClassWeights,
    compute_class_weights,
    make_sampler,
    nearest_neighbors,
)
from .benchmark import (
    BenchmarkRun,
    duplicate_impact_run,
    make_folds,
    run_benchmark,
)
from .boosting import GradientBoosting
from .corpus import (
    CommentRecord,
    Corpus,
    PreprocessConfig,
    dedupe,
    load_corpus,
    normalize_text,
    preprocess,
    read_corpus,
    write_corpus,
)
from .explain import contribution_stats, feature_diff, linear_shap
from .features import TfidfFeaturizer, Vocabulary, build_dataset, tokenize
from .forest import RandomForest
from .linear import LogisticRegressionGD
from .metrics import compute_metrics, roc_auc, wilcoxon_signed_rank
from .models import TrainedModel, load_model, make_model, save_model

__version__ = "0.1.0"

__all__ = [
    "ADASYN",
    "BenchmarkRun",
    "BorderlineSMOTE",
    "ClassWeights",
    "CommentRecord",
    "Corpus",
    "GradientBoosting",
    "LogisticRegressionGD",
    "PreprocessConfig",
    "RandomForest",
    "SMOTE",
    "SVMSMOTE",
    "TfidfFeaturizer",
    "TrainedModel",
    "Vocabulary",
    "build_dataset",
    "compute_class_weights",
    "compute_metrics",
    "contribution_stats",
    "dedupe",
    "duplicate_impact_run",
    "feature_diff",
    "linear_shap",
    "load_corpus",
    "load_model",
    "make_folds",
    "make_model",
    "make_sampler",
    "nearest_neighbors",
    "normalize_text",
    "preprocess",
    "read_corpus",
    "roc_auc",
    "run_benchmark",
    "save_model",
    "tokenize",
    "wilcoxon_signed_rank",
    "write_corpus",
    "__version__",
]
