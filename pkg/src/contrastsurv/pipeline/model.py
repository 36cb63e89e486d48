"""The end-to-end fitted model: scaler, optional CL network, downstream model."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from ..contrastive import extract_features
from ..cox import BaselineHazard, model_from_dict, survival_function
from ..data_model import ExpressionMatrix, align_genes
from ..neural import MLPParams, sigmoid

MODEL_FORMAT_VERSION = 1


@dataclass(frozen=True)
class Standardizer:
    mean: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, x: np.ndarray) -> "Standardizer":
        sd = x.std(axis=0)
        return cls(x.mean(axis=0), np.where(sd > 0, sd, 1.0))

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return (x - self.mean) / self.scale

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d) -> "Standardizer | None":
        if d is None:
            return None
        return cls(np.array(d["mean"], dtype=float), np.array(d["scale"], dtype=float))


@dataclass
class PrognosisModel:
    """Gene expression in, log hazard (or log-odds of high risk) out."""

    method: str
    task: str                                # "cox" or "classifier"
    gene_ids: tuple[str, ...]
    input_scaler: Standardizer
    downstream: object
    cl_params: MLPParams | None = None
    tap: int | None = None
    feature_scaler: Standardizer | None = None
    baseline: BaselineHazard | None = None
    cutoffs: dict = field(default_factory=dict)
    train_sample_ids: tuple[str, ...] = ()
    train_scores: np.ndarray | None = None
    selected: dict = field(default_factory=dict)

    def features(self, x: np.ndarray) -> np.ndarray:
        xs = self.input_scaler(np.atleast_2d(np.asarray(x, dtype=float)))
        if self.cl_params is not None:
            xs = extract_features(self.cl_params, self.tap, xs)
        if self.feature_scaler is not None:
            xs = self.feature_scaler(xs)
        return xs

    def score(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(self.downstream.predict(self.features(x)), dtype=float)

    def score_matrix(self, m: ExpressionMatrix) -> tuple[np.ndarray, ExpressionMatrix]:
        """Score a matrix after aligning it to the model's gene order."""
        if tuple(m.gene_ids) != self.gene_ids:
            m = align_genes(m, self.gene_ids)
        return self.score(m.values), m

    def survival(self, scores, times) -> np.ndarray:
        if not len(times):
            return np.empty((len(scores), 0))
        if self.baseline is None:
            raise ValueError("survival probabilities need a Cox model with a baseline hazard")
        curve = survival_function(self.baseline, scores)
        return np.column_stack([curve.at(t) for t in times])

    def risk_groups(self, scores) -> np.ndarray:
        scores = np.asarray(scores, dtype=float)
        if self.task == "classifier":
            return np.where(sigmoid(scores) >= 0.5, "high", "low")
        return np.where(np.exp(scores) > self.cutoffs["median_hr"], "high", "low")

    def to_dict(self) -> dict:
        return {
            "format_version": MODEL_FORMAT_VERSION,
            "method": self.method,
            "task": self.task,
            "gene_ids": list(self.gene_ids),
            "input_scaler": self.input_scaler.to_dict(),
            "cl_params": None if self.cl_params is None else self.cl_params.to_dict(),
            "tap": self.tap,
            "feature_scaler": None if self.feature_scaler is None else self.feature_scaler.to_dict(),
            "downstream": self.downstream.to_dict(),
            "baseline": None if self.baseline is None else self.baseline.to_dict(),
            "cutoffs": self.cutoffs,
            "train_sample_ids": list(self.train_sample_ids),
            "train_scores": None if self.train_scores is None else self.train_scores.tolist(),
            "selected": self.selected,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PrognosisModel":
        if d.get("format_version") != MODEL_FORMAT_VERSION:
            raise ValueError(f"unsupported model format {d.get('format_version')!r}")
        return cls(
            method=d["method"], task=d["task"], gene_ids=tuple(d["gene_ids"]),
            input_scaler=Standardizer.from_dict(d["input_scaler"]),
            downstream=model_from_dict(d["downstream"]),
            cl_params=None if d["cl_params"] is None else MLPParams.from_dict(d["cl_params"]),
            tap=d["tap"],
            feature_scaler=Standardizer.from_dict(d["feature_scaler"]),
            baseline=None if d["baseline"] is None else BaselineHazard.from_dict(d["baseline"]),
            cutoffs=d["cutoffs"],
            train_sample_ids=tuple(d["train_sample_ids"]),
            train_scores=None if d["train_scores"] is None else np.array(d["train_scores"], dtype=float),
            selected=d["selected"],
        )

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "PrognosisModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))
