"""Train/test splits, CV folds, risk labels and risk-group stratification."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..data_model import ClinicalTable, CohortDataset

THREE_YEARS_DAYS = 1095


class LeakageError(RuntimeError):
    """A fit consumed samples that are not train-tagged."""


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0 < self.train_fraction < 1:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


def split_indices(n: int, spec: SplitSpec) -> tuple[np.ndarray, np.ndarray]:
    perm = np.random.default_rng(spec.seed).permutation(n)
    k = math.ceil(spec.train_fraction * n)
    return np.sort(perm[:k]), np.sort(perm[k:])


def train_test_split(dataset: CohortDataset, spec: SplitSpec) -> tuple[CohortDataset, CohortDataset]:
    """Seeded random split; the first ``ceil(fraction * n)`` permuted samples train."""
    if len(dataset) < 5:
        raise ValueError("need at least 5 samples to split")
    tr, te = split_indices(len(dataset), spec)
    return dataset.subset(tr, "train"), dataset.subset(te, "test")


def kfold_indices(n: int, k: int, seed: int) -> list[np.ndarray]:
    """Seeded partition of ``range(n)`` into ``k`` folds whose sizes differ by at most one."""
    if k < 2 or n < k:
        raise ValueError(f"cannot make {k} folds from {n} samples")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(f) for f in np.array_split(perm, k)]


@dataclass(frozen=True)
class RiskLabels:
    labels: np.ndarray     # 1 = high risk, 0 = low risk, for kept samples
    kept: np.ndarray
    dropped: np.ndarray


def classifier_labeling(clinical: ClinicalTable | CohortDataset, horizon_days: float = THREE_YEARS_DAYS) -> RiskLabels:
    """High risk: event before the horizon. Low risk: followed to the horizon or beyond.

    Samples censored before the horizon have no label and are dropped. A time
    exactly at the horizon counts as low risk.
    """
    t = np.asarray(clinical.time if isinstance(clinical, ClinicalTable) else clinical.times)
    e = np.asarray(clinical.event if isinstance(clinical, ClinicalTable) else clinical.events).astype(bool)
    high = e & (t < horizon_days)
    low = t >= horizon_days
    kept = np.flatnonzero(high | low)
    dropped = np.flatnonzero(~(high | low))
    if kept.size == 0:
        raise ValueError("no sample can be labelled at this horizon")
    return RiskLabels(high[kept].astype(int), kept, dropped)


def stratify_by_median_hr(train_hr, test_hr) -> tuple[np.ndarray, float]:
    """``"high"`` above the median training HR, otherwise ``"low"``."""
    train_hr = np.asarray(train_hr, dtype=float)
    if train_hr.size == 0:
        raise ValueError("need training hazard ratios")
    cutoff = float(np.median(train_hr))
    return np.where(np.asarray(test_hr, dtype=float) > cutoff, "high", "low"), cutoff


def percentile_cutoffs(train_hr, p_high: float = 0.73, p_low: float = 0.51) -> tuple[float, float]:
    train_hr = np.asarray(train_hr, dtype=float)
    if train_hr.size == 0:
        raise ValueError("need training hazard ratios")
    if not p_low < p_high:
        raise ValueError("p_low must be below p_high")
    return (float(np.quantile(train_hr, p_high, method="linear")),
            float(np.quantile(train_hr, p_low, method="linear")))


def stratify_by_percentiles(train_hr, test_hr, p_high: float = 0.73, p_low: float = 0.51) -> np.ndarray:
    """Three groups by training-HR percentiles: ``>= c1`` high, ``[c2, c1)`` medium, ``< c2`` low."""
    c1, c2 = percentile_cutoffs(train_hr, p_high, p_low)
    return apply_percentile_cutoffs(test_hr, c1, c2)


def apply_percentile_cutoffs(hr, c1: float, c2: float) -> np.ndarray:
    hr = np.asarray(hr, dtype=float)
    return np.where(hr >= c1, "high", np.where(hr >= c2, "medium", "low"))


class LeakageAudit:
    """Records every fit and which samples it consumed.

    A fit is a violation when it is handed a dataset not tagged ``"train"`` or
    when any of its sample ids belong to the held-out test set.
    """

    def __init__(self, test_ids=()):
        self.test_ids = frozenset(test_ids)
        self.fit_calls = 0
        self.violations: list[str] = []

    def check(self, sample_ids, context: str, provenance: str = "train") -> None:
        self.fit_calls += 1
        if provenance != "train":
            self.violations.append(f"{context}: dataset tagged {provenance!r}")
        leaked = self.test_ids.intersection(sample_ids)
        if leaked:
            self.violations.append(f"{context}: {len(leaked)} test sample(s) used in fitting")

    def merge(self, other: "LeakageAudit") -> None:
        self.fit_calls += other.fit_calls
        self.violations.extend(other.violations)

    def to_dict(self) -> dict:
        return {"fit_calls": self.fit_calls, "violations": len(self.violations),
                "details": list(self.violations)}
