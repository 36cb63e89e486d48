"""Pooled contrastive training across several cancer types.

One contrastive network is trained on the concatenated training data of every
cancer in a group, with PFI groups formed inside each cancer and kept disjoint.
Downstream models are then fitted per cancer on that cancer's features only.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from importlib import resources
from typing import Sequence

import numpy as np
import yaml

from ..data_model import CohortDataset, DataError
from .cv import CVGrid, CVResult, _check_objective, _stage1, fit_downstream
from .model import Standardizer
from .splits import LeakageAudit, LeakageError


@dataclass(frozen=True)
class PoolSpec:
    name: str
    members: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "members", tuple(self.members))
        if len(set(self.members)) < 2:
            raise ValueError(f"pool {self.name!r} needs at least two distinct members")


def load_pool_specs(path=None) -> list[PoolSpec]:
    """Read pool definitions; without ``path`` the bundled default groups are used."""
    if path is None:
        text = resources.files("contrastsurv").joinpath("data/cancer_groups.yaml").read_text("utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    doc = yaml.safe_load(text) or {}
    return [PoolSpec(g["name"], tuple(g["members"])) for g in doc.get("groups", [])]


@dataclass
class PooledResult:
    cl_params: list
    stage1: list[dict]
    scaler: Standardizer
    per_cancer: dict[str, CVResult] = field(default_factory=dict)


def _members(datasets: Sequence[CohortDataset], pool: PoolSpec | None) -> list[CohortDataset]:
    dsets = list(datasets)
    if pool is not None:
        by_type = {d.cancer_type: d for d in dsets}
        missing = [m for m in pool.members if m not in by_type]
        if missing:
            raise ValueError(f"pool {pool.name!r} has no data for {', '.join(missing)}")
        dsets = [by_type[m] for m in dict.fromkeys(pool.members)]
    if not dsets:
        raise ValueError("no datasets to pool")
    types = [d.cancer_type for d in dsets]
    if len(set(types)) != len(types):
        raise ValueError("each cancer type may appear only once in a pool")
    genes = dsets[0].expression.gene_ids
    for d in dsets[1:]:
        if d.expression.gene_ids != genes:
            raise DataError(f"{d.cancer_type} is not aligned to the gene order of {dsets[0].cancer_type}")
    for d in dsets:
        if d.provenance != "train":
            raise LeakageError(f"{d.cancer_type}: pooled training was handed a {d.provenance!r}-tagged dataset")
    ids = [s for d in dsets for s in d.sample_ids]
    if len(set(ids)) != len(ids):
        raise DataError("sample ids overlap between pooled cancers")
    return dsets


def pooled_cl_train(datasets: Sequence[CohortDataset], pool: PoolSpec | None, grid: CVGrid,
                    objective: str = "cl_then_cox", downstream: str = "en", seed: int = 0,
                    audit: LeakageAudit | None = None) -> PooledResult:
    """Train one CL network on all members' training data, then per-cancer models.

    ``pool=None`` pools every given dataset; with a single dataset the result
    equals :func:`cross_validate` on it with the same seed.
    """
    _, use_cl = _check_objective(objective)
    if not use_cl:
        raise ValueError("pooled training needs a contrastive objective")
    dsets = _members(datasets, pool)
    audit = audit if audit is not None else LeakageAudit()
    x = np.vstack([d.x for d in dsets])
    times = np.concatenate([d.times for d in dsets])
    codes = np.concatenate([np.full(len(d), i) for i, d in enumerate(dsets)])
    ids = np.asarray([s for d in dsets for s in d.sample_ids])
    scaler = Standardizer.fit(x)
    nets, stage1 = _stage1(scaler(x), times, codes, ids, grid, seed, audit)
    out = PooledResult([p for _, p in nets], stage1, scaler)
    for d in dsets:
        method = f"pooled:{objective}:{downstream}"
        out.per_cancer[d.cancer_type] = fit_downstream(d, scaler(d.x), scaler, nets, stage1, grid,
                                                       objective, downstream, seed, audit, method)
    return out


__all__ = ["PoolSpec", "PooledResult", "load_pool_specs", "pooled_cl_train"]
