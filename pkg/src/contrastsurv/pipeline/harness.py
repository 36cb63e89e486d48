"""Repeat an experiment over consecutive seeds and aggregate the results."""

from __future__ import annotations

import logging
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..metrics import wilcoxon_rank_sum

log = logging.getLogger(__name__)

SUMMARY_METRICS = ("c_index", "ibs", "auc")


@dataclass
class ExperimentReport:
    n_repeats: int
    base_seed: int
    repeats: list[dict]
    failures: list[dict]
    summary: dict
    comparisons: list[dict]
    config: dict = field(default_factory=dict)
    curves: dict = field(default_factory=dict, repr=False)   # seed -> curve objects, not serialized

    @property
    def complete(self) -> bool:
        return not self.failures

    @property
    def seeds(self) -> list[int]:
        return list(range(self.base_seed, self.base_seed + self.n_repeats))

    def to_dict(self) -> dict:
        return {"n_repeats": self.n_repeats, "n_completed": len(self.repeats), "complete": self.complete,
                "base_seed": self.base_seed, "seeds": self.seeds, "config": self.config,
                "summary": self.summary, "comparisons": self.comparisons,
                "repeats": self.repeats, "failures": self.failures}


def _call(closure, seed):
    try:
        return seed, closure(seed), None
    except Exception as exc:  # recorded per repeat; the harness keeps going
        log.warning("repeat with seed %d failed: %s", seed, exc)
        return seed, None, f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}"


def _record(out):
    # closures may return a plain dict or an object carrying .record and .curves
    if isinstance(out, dict):
        return out, {}
    return out.record, getattr(out, "curves", {})


def metric_table(repeats: Sequence[dict], split: str = "test") -> dict:
    """``{method: {metric: [value per repeat]}}`` for the numeric metrics of one split."""
    table: dict = {}
    for r in repeats:
        for method, block in r["methods"].items():
            for k, v in block.get(split, {}).items():
                table.setdefault(method, {}).setdefault(k, []).append(v)
    return table


def summarize(values) -> dict:
    v = np.array([x for x in values if x is not None], dtype=float)
    out = {"n": int(v.size), "mean": None, "std": None}
    if v.size and np.all(v == v[0]):
        # summing identical floats is not exact; report them as they are
        out["mean"] = float(v[0])
        out["std"] = 0.0 if v.size > 1 else None
    elif v.size:
        out["mean"] = float(v.mean())
        out["std"] = float(v.std(ddof=1))
    return out


def repeat_harness(closure: Callable[[int], object], n_repeats: int = 40, base_seed: int = 0,
                   workers: int = 1, comparisons: Sequence[tuple[str, str]] = (),
                   metrics: Sequence[str] = SUMMARY_METRICS, config: dict | None = None) -> ExperimentReport:
    """Run ``closure(seed)`` for ``seed = base_seed .. base_seed + n_repeats - 1``.

    The closure returns a record ``{"methods": {name: {"test": {metric: value}}}, ...}``
    (or an object with ``.record``). Results are reduced in seed order, so the
    report does not depend on ``workers``. Each pair in ``comparisons`` gets a
    two-sided Wilcoxon rank-sum test per metric over the completed repeats.
    """
    if n_repeats < 1:
        raise ValueError("n_repeats must be positive")
    seeds = list(range(base_seed, base_seed + n_repeats))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_call, [closure] * n_repeats, seeds))
    else:
        results = [_call(closure, s) for s in seeds]
    repeats, failures, curves = [], [], {}
    for seed, out, err in results:
        if err is not None:
            failures.append({"repeat": seed - base_seed, "seed": seed, "error": err.splitlines()[0]})
            continue
        rec, cv = _record(out)
        repeats.append(rec)
        curves[seed] = cv
    table = metric_table(repeats)
    summary = {m: {k: summarize(vals) for k, vals in sorted(mt.items())
                   if k in metrics} for m, mt in sorted(table.items())}
    comps = []
    for a, b in comparisons:
        for k in metrics:
            va = [x for x in table.get(a, {}).get(k, []) if x is not None]
            vb = [x for x in table.get(b, {}).get(k, []) if x is not None]
            if not va or not vb:
                continue
            u, p = wilcoxon_rank_sum(va, vb)
            comps.append({"a": a, "b": b, "metric": k, "split": "test", "u": u, "p_value": p,
                          "mean_difference": float(np.mean(va) - np.mean(vb))})
    return ExperimentReport(n_repeats, base_seed, repeats, failures, summary, comps, config or {}, curves)


__all__ = ["ExperimentReport", "metric_table", "repeat_harness", "summarize"]
