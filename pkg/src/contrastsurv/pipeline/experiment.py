"""One repeat of an experiment: split, select and fit every method, evaluate on test."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..data_model import CohortDataset
from ..metrics import (MetricError, concordance_index, integrated_brier_score, km_estimator,
                       log_rank_test, roc_auc)
from .cv import METHODS, CVGrid, CVResult, cross_validate, sub_seed
from .model import PrognosisModel
from .pooling import PoolSpec, pooled_cl_train
from .splits import LeakageAudit, SplitSpec, classifier_labeling, train_test_split

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class RepeatOutput:
    """Metrics are JSON-ready; ``curves`` holds arrays for CSV export and plots."""

    seed: int
    record: dict
    curves: dict = field(default_factory=dict)


def _safe(fn, *args):
    try:
        return fn(*args)
    except MetricError as exc:
        log.info("metric skipped: %s", exc)
        return None


def _finite(v):
    return None if v is None or not np.isfinite(v) else float(v)


def evaluate(model: PrognosisModel, train: CohortDataset, test: CohortDataset,
             horizon_days: float = 1095, min_risk_set: int = 20) -> tuple[dict, dict]:
    """Test-split metrics of a fitted model, plus the curves behind them."""
    s_test = model.score(test.x)
    curves: dict = {}
    m: dict = {"c_index": _safe(concordance_index, s_test, test.times, test.events)}
    if model.task == "cox":
        s_train = model.train_scores if model.train_scores is not None else model.score(train.x)

        def surv_at(t):
            return model.survival(s_test, [t])[:, 0]

        m["ibs"] = _safe(integrated_brier_score, surv_at, train.times, train.events,
                         test.times, test.events, min_risk_set)
        groups = model.risk_groups(s_test)
        m["train_c_index"] = _safe(concordance_index, s_train, train.times, train.events)
    else:
        m["ibs"] = None
        groups = model.risk_groups(s_test)
    hi, lo = groups == "high", groups == "low"
    m["n_high"], m["n_low"] = int(hi.sum()), int(lo.sum())
    m["logrank_p"] = None
    if hi.any() and lo.any():
        r = _safe(log_rank_test, test.times[hi], test.events[hi], test.times[lo], test.events[lo])
        m["logrank_p"] = None if r is None else _finite(r[1])
        curves["km_high"] = km_estimator(test.times[hi], test.events[hi])
        curves["km_low"] = km_estimator(test.times[lo], test.events[lo])
    m["auc"] = None
    try:
        rl = classifier_labeling(test.clinical, horizon_days)
    except ValueError:
        rl = None
    if rl is not None and 0 < rl.labels.sum() < rl.labels.size:
        roc, auc = roc_auc(s_test[rl.kept], rl.labels)
        m["auc"] = auc
        curves["roc"] = roc
    return {k: (_finite(v) if isinstance(v, float) else v) for k, v in m.items()}, curves


def run_repeat(dataset: CohortDataset, methods, grid: CVGrid, seed: int,
               train_fraction: float = 0.8, min_risk_set: int = 20,
               keep_models: bool = False) -> RepeatOutput:
    """Split with ``seed``, fit each method by cross-validation, evaluate on the test split.

    A leakage audit holding the test ids watches every fit; its counts are part
    of the record.
    """
    unknown = [m for m in methods if m not in METHODS]
    if unknown:
        raise ValueError(f"unknown method(s): {', '.join(unknown)}")
    train, test = train_test_split(dataset, SplitSpec(train_fraction, sub_seed(seed, 0)))
    audit = LeakageAudit(test.sample_ids)
    record = {"seed": seed, "split": {"n_train": len(train), "n_test": len(test)}, "methods": {}}
    curves: dict = {}
    for name in methods:
        objective, downstream = METHODS[name]
        res: CVResult = cross_validate(train, grid, objective, downstream, seed=sub_seed(seed, 1),
                                       audit=audit, method=name)
        metrics, c = evaluate(res.model, train, test, grid.horizon_days, min_risk_set)
        record["methods"][name] = {"test": metrics, "selected": res.selected}
        curves[name] = c
        if keep_models:
            curves[name]["model"] = res.model
    record["audit"] = audit.to_dict()
    return RepeatOutput(seed, record, curves)


def run_pooled_repeat(datasets, pool: PoolSpec | None, methods, grid: CVGrid, seed: int,
                      train_fraction: float = 0.8, min_risk_set: int = 20) -> RepeatOutput:
    """Like :func:`run_repeat`, with one CL network trained on all cohorts' training data.

    Every cohort is split independently; results are keyed ``"<method>@<cancer>"``.
    """
    bad = [m for m in methods if m not in METHODS or not METHODS[m][0].startswith("cl_")]
    if bad:
        raise ValueError(f"pooled runs need contrastive methods, got: {', '.join(bad)}")
    splits = [train_test_split(d, SplitSpec(train_fraction, sub_seed(seed, 0, i)))
              for i, d in enumerate(datasets)]
    audit = LeakageAudit([s for _, te in splits for s in te.sample_ids])
    record = {"seed": seed, "split": {d.cancer_type: {"n_train": len(tr), "n_test": len(te)}
                                      for d, (tr, te) in zip(datasets, splits)}, "methods": {}}
    curves: dict = {}
    trains = [tr for tr, _ in splits]
    for name in methods:
        objective, downstream = METHODS[name]
        res = pooled_cl_train(trains, pool, grid, objective, downstream, seed=sub_seed(seed, 1), audit=audit)
        for tr, te in splits:
            cv = res.per_cancer[tr.cancer_type]
            metrics, c = evaluate(cv.model, tr, te, grid.horizon_days, min_risk_set)
            key = f"{name}@{tr.cancer_type}"
            record["methods"][key] = {"test": metrics, "selected": cv.selected}
            curves[key] = c
    record["audit"] = audit.to_dict()
    return RepeatOutput(seed, record, curves)


__all__ = ["RepeatOutput", "evaluate", "run_pooled_repeat", "run_repeat"]
