from .cv import METHODS, CVGrid, CVResult, cross_validate, fit_downstream, group_labels
from .experiment import RepeatOutput, evaluate, run_pooled_repeat, run_repeat
from .harness import ExperimentReport, metric_table, repeat_harness, summarize
from .model import PrognosisModel, Standardizer
from .pooling import PoolSpec, PooledResult, load_pool_specs, pooled_cl_train
from .splits import (THREE_YEARS_DAYS, LeakageAudit, LeakageError, RiskLabels, SplitSpec,
                     apply_percentile_cutoffs, classifier_labeling, kfold_indices, percentile_cutoffs,
                     stratify_by_median_hr,
                     stratify_by_percentiles, train_test_split)
from .synthetic import SyntheticTruth, synthetic_cohort

__all__ = [
    "METHODS", "CVGrid", "CVResult", "cross_validate", "fit_downstream", "group_labels",
    "RepeatOutput", "evaluate", "run_pooled_repeat", "run_repeat", "ExperimentReport", "metric_table",
    "repeat_harness", "summarize",
    "PrognosisModel", "Standardizer", "PoolSpec", "PooledResult", "load_pool_specs", "pooled_cl_train",
    "THREE_YEARS_DAYS", "LeakageAudit", "LeakageError", "RiskLabels", "SplitSpec", "classifier_labeling",
    "apply_percentile_cutoffs",
    "kfold_indices", "percentile_cutoffs", "stratify_by_median_hr", "stratify_by_percentiles",
    "train_test_split", "SyntheticTruth", "synthetic_cohort",
]
