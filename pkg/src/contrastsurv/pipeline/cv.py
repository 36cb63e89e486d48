"""Two-stage cross-validated model selection.

Stage 1 (CL objectives only) ranks contrastive-network configurations by mean
validation contrastive loss and refits the best few on the whole training
set. Stage 2 searches jointly over those networks, their tap layers and the
downstream hyperparameters, scoring held-out folds by per-sample negative log
partial likelihood (Cox) or log-loss (classifier).
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from ..contrastive import SupConConfig, assign_pfi_groups, extract_features, mean_supcon, train_cl
from ..cox import breslow_baseline, fit_cox_en, fit_cox_nn, neg_log_partial_likelihood
from ..data_model import CohortDataset
from ..gbdt import GBTConfig, fit_gbt, logistic_loss
from ..neural import MLPArchitecture, TrainConfig
from .model import PrognosisModel, Standardizer
from .splits import LeakageAudit, LeakageError, classifier_labeling, kfold_indices, percentile_cutoffs

log = logging.getLogger(__name__)

OBJECTIVES = ("cl_then_cox", "cl_then_classifier", "direct_cox", "direct_classifier")
DOWNSTREAM = ("en", "gbt", "nn")

# method name -> (objective, downstream model)
METHODS = {
    "cl_cox_en": ("cl_then_cox", "en"),
    "cl_cox_gbt": ("cl_then_cox", "gbt"),
    "cl_cox_nn": ("cl_then_cox", "nn"),
    "cox_en": ("direct_cox", "en"),
    "cox_gbt": ("direct_cox", "gbt"),
    "cox_nn": ("direct_cox", "nn"),
    "cl_classifier": ("cl_then_classifier", "gbt"),
    "classifier": ("direct_classifier", "gbt"),
}


def _tuples(v):
    return tuple(tuple(int(w) for w in x) for x in v)


@dataclass(frozen=True)
class CVGrid:
    """Candidate values per hyperparameter. Desk-scale defaults."""

    fold_count: int = 5
    top_mlps: int = 5
    # contrastive network: widths after the input layer, last entry is the output
    cl_layers: tuple = ((64, 16),)
    cl_learning_rates: tuple = (0.05,)
    cl_l2_weights: tuple = (1e-3,)
    cl_max_epochs: int = 100
    cl_patience: int = 15
    cl_batch_size: int = 64
    temperature: float = 0.5
    target_group_size: int = 15
    normalize_embeddings: bool = True
    taps: tuple = (1, 2)
    # Cox elastic net
    en_lambdas: tuple = (0.2, 0.1, 0.05, 0.02)
    en_alphas: tuple = (0.1, 0.5)
    # boosted Cox
    gbt_max_depths: tuple = (2, 3)
    gbt_l2s: tuple = (1.0,)
    gbt_subsamples: tuple = (0.8,)
    gbt_n_trees: tuple = (50,)
    gbt_learning_rates: tuple = (0.1,)
    # neural Cox: hidden widths (output width 1 is implied)
    nn_hidden: tuple = ((8,),)
    nn_learning_rates: tuple = (0.1,)
    nn_l2_weights: tuple = (1e-3,)
    nn_max_epochs: int = 200
    nn_patience: int = 20
    # boosted classifier
    clf_max_depths: tuple = (2, 3)
    clf_n_trees: tuple = (50,)
    clf_learning_rates: tuple = (0.1,)
    min_child_weight: float = 1.0
    horizon_days: float = 1095

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, (list, tuple)):
                if not v:
                    raise ValueError(f"grid entry {f.name!r} is empty")
                if f.name in ("cl_layers", "nn_hidden"):
                    object.__setattr__(self, f.name, _tuples(v))
                else:
                    object.__setattr__(self, f.name, tuple(v))
        if self.fold_count < 2:
            raise ValueError("fold_count must be at least 2")
        if self.top_mlps < 1:
            raise ValueError("top_mlps must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "CVGrid":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown grid key(s): {', '.join(unknown)}")
        return cls(**d)

    def to_dict(self) -> dict:
        return {k: (list(map(list, v)) if k in ("cl_layers", "nn_hidden") else
                    list(v) if isinstance(v, tuple) else v) for k, v in asdict(self).items()}

    def supcon(self) -> SupConConfig:
        return SupConConfig(self.temperature, self.target_group_size, self.cl_batch_size,
                            self.normalize_embeddings)


@dataclass
class CVResult:
    model: PrognosisModel
    selected: dict
    stage1: list[dict] = field(default_factory=list)
    stage2: list[dict] = field(default_factory=list)


def sub_seed(*keys: int) -> int:
    return int(np.random.SeedSequence([int(k) for k in keys]).generate_state(1)[0])


def _downstream_grid(kind: str, task: str, grid: CVGrid) -> list[dict]:
    if task == "classifier":
        return [dict(max_depth=d, n_trees=t, learning_rate=lr)
                for d, t, lr in itertools.product(grid.clf_max_depths, grid.clf_n_trees, grid.clf_learning_rates)]
    if kind == "en":
        # lambdas descending within each alpha so fits can warm-start
        return [dict(lam=lam, alpha=a) for a in grid.en_alphas
                for lam in sorted(grid.en_lambdas, reverse=True)]
    if kind == "gbt":
        return [dict(max_depth=d, l2=l2, subsample=s, n_trees=t, learning_rate=lr)
                for d, l2, s, t, lr in itertools.product(grid.gbt_max_depths, grid.gbt_l2s, grid.gbt_subsamples,
                                                         grid.gbt_n_trees, grid.gbt_learning_rates)]
    if kind == "nn":
        return [dict(hidden=list(h), learning_rate=lr, l2_weight=l2)
                for h, lr, l2 in itertools.product(grid.nn_hidden, grid.nn_learning_rates, grid.nn_l2_weights)]
    raise ValueError(f"unknown downstream model {kind!r}")


class _Downstream:
    """Fits and scores one downstream model family on a feature matrix."""

    def __init__(self, kind: str, task: str, grid: CVGrid, seed: int):
        self.kind, self.task, self.grid, self.seed = kind, task, grid, seed
        self._warm = None

    @property
    def scales_features(self) -> bool:
        return self.kind == "nn" and self.task == "cox"

    def fit(self, hp: dict, f, t, e, y, val=None, epochs: int | None = None):
        """Returns ``(model, best_epoch)``."""
        g = self.grid
        if self.task == "classifier":
            cfg = GBTConfig(max_depth=hp["max_depth"], n_trees=hp["n_trees"], learning_rate=hp["learning_rate"],
                            min_child_weight=g.min_child_weight, seed=self.seed)
            return fit_gbt(f, y, "logistic", cfg), None
        if self.kind == "en":
            init = self._warm if self._warm is not None and self._warm.shape[0] == f.shape[1] else None
            m = fit_cox_en(f, t, e, hp["lam"], hp["alpha"], tol=1e-5, max_iter=2000,
                           standardize=True, init=init)
            self._warm = m.coefficients
            return m, None
        if self.kind == "gbt":
            cfg = GBTConfig(max_depth=hp["max_depth"], n_trees=hp["n_trees"], learning_rate=hp["learning_rate"],
                            l2=hp["l2"], subsample=hp["subsample"], min_child_weight=g.min_child_weight,
                            seed=self.seed)
            return fit_gbt(f, (t, e), "cox", cfg), None
        arch = MLPArchitecture((f.shape[1], *hp["hidden"], 1))
        cfg = TrainConfig(learning_rate=hp["learning_rate"], l2_weight=hp["l2_weight"], batch_size=f.shape[0],
                          max_epochs=epochs if epochs is not None else g.nn_max_epochs,
                          patience=g.nn_patience, seed=self.seed)
        m = fit_cox_nn(f, t, e, arch, cfg, validation=val)
        return m, m.best_epoch

    def reset(self):
        self._warm = None

    def loss(self, model, f, t, e, y) -> float:
        s = model.predict(f)
        if self.task == "classifier":
            return logistic_loss(s, y)
        if not np.asarray(e).astype(bool).any():
            return 0.0
        return neg_log_partial_likelihood(s, t, e)[0] / len(t)


def _require_train(ds: CohortDataset) -> None:
    if ds.provenance != "train":
        raise LeakageError(f"cross-validation was handed a {ds.provenance!r}-tagged dataset")


def group_labels(times, codes, fit, val=None, target_group_size: int = 15):
    """PFI group labels computed separately per cancer code on the ``fit`` rows.

    Each cancer's groups are offset past the previous cancer's, so labels never
    collide across cancers. ``val`` rows are mapped with the boundaries learned
    on their own cancer's ``fit`` rows.
    """
    y_fit = np.empty(fit.size, dtype=int)
    y_val = None if val is None else np.empty(val.size, dtype=int)
    offset = 0
    for c in np.unique(codes[fit]):
        in_fit = codes[fit] == c
        lab = assign_pfi_groups(times[fit][in_fit], target_group_size)
        y_fit[in_fit] = lab.labels + offset
        if val is not None:
            in_val = codes[val] == c
            y_val[in_val] = lab.assign(times[val][in_val]) + offset
        offset += lab.m
    if val is not None and np.any(~np.isin(codes[val], codes[fit])):
        raise ValueError("a validation fold holds a cancer type absent from its training folds")
    return y_fit, y_val


def _stage1(xs, times, codes, ids, grid: CVGrid, seed: int, audit: LeakageAudit):
    n, p = xs.shape
    folds = kfold_indices(n, grid.fold_count, sub_seed(seed, 1))
    supcon = grid.supcon()
    cands = list(itertools.product(grid.cl_layers, grid.cl_learning_rates, grid.cl_l2_weights))
    table = []
    for ci, (layers, lr, l2) in enumerate(cands):
        arch = MLPArchitecture((p, *layers))
        losses, epochs = [], []
        for fi, val in enumerate(folds):
            fit = np.setdiff1d(np.arange(n), val)
            y_fit, y_val = group_labels(times, codes, fit, val, grid.target_group_size)
            audit.check(ids[fit], "cl stage 1")
            cfg = TrainConfig(learning_rate=lr, l2_weight=l2, batch_size=supcon.batch_size,
                              max_epochs=grid.cl_max_epochs, patience=grid.cl_patience,
                              seed=sub_seed(seed, 2, ci, fi))
            res = train_cl(xs[fit], y_fit, arch, cfg, supcon, validation=(xs[val], y_val))
            best = min(res.val_loss) if res.val_loss else mean_supcon(res.params, xs[val], y_val, supcon)
            losses.append(best)
            epochs.append(res.best_epoch)
        table.append(dict(layers=list(layers), learning_rate=lr, l2_weight=l2,
                          val_loss=float(np.mean(losses)), best_epochs=epochs))
    order = sorted(range(len(cands)), key=lambda i: table[i]["val_loss"])[:grid.top_mlps]
    y_all, _ = group_labels(times, codes, np.arange(n), None, grid.target_group_size)
    nets = []
    for ci in order:
        layers, lr, l2 = cands[ci]
        n_ep = max(1, int(round(float(np.median(table[ci]["best_epochs"])))))
        cfg = TrainConfig(learning_rate=lr, l2_weight=l2, batch_size=supcon.batch_size, max_epochs=n_ep,
                          patience=1, seed=sub_seed(seed, 3, ci))
        audit.check(ids, "cl refit")
        res = train_cl(xs, y_all, MLPArchitecture((p, *layers)), cfg, supcon)
        nets.append((ci, res.params))
    return nets, table


def _check_objective(objective: str) -> tuple[str, bool]:
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    return ("classifier" if objective.endswith("classifier") else "cox"), objective.startswith("cl_")


def cross_validate(train: CohortDataset, grid: CVGrid, objective: str, downstream: str = "en",
                   seed: int = 0, audit: LeakageAudit | None = None, method: str | None = None) -> CVResult:
    """Select hyperparameters by k-fold CV on ``train`` and refit the winner.

    Raises:
        LeakageError: if ``train`` is not train-tagged.
        ValueError: on an unknown objective or a training set smaller than the fold count.
    """
    task, use_cl = _check_objective(objective)
    _require_train(train)
    audit = audit if audit is not None else LeakageAudit()
    if len(train) < grid.fold_count:
        raise ValueError(f"training set of {len(train)} is smaller than {grid.fold_count} folds")
    scaler = Standardizer.fit(train.x)
    xs = scaler(train.x)
    nets, stage1 = None, []
    if use_cl:
        codes = np.zeros(len(train), dtype=int)
        nets, stage1 = _stage1(xs, train.times, codes, np.asarray(train.sample_ids), grid, seed, audit)
    return fit_downstream(train, xs, scaler, nets, stage1, grid, objective, downstream, seed, audit, method)


def fit_downstream(train: CohortDataset, xs, scaler: Standardizer, nets, stage1, grid: CVGrid,
                   objective: str, downstream: str, seed: int, audit: LeakageAudit,
                   method: str | None = None) -> CVResult:
    """Stage 2: choose network, tap and downstream hyperparameters; refit the winner.

    ``xs`` is ``train.x`` after ``scaler``; ``nets`` lists ``(stage-1 index, params)``
    pairs, or is None for the direct objectives.
    """
    task, _ = _check_objective(objective)
    _require_train(train)
    ids = np.asarray(train.sample_ids)
    times, events = train.times, train.events
    if nets is not None:
        feature_sets = [(ci, tap, params, extract_features(params, tap, xs))
                        for ci, params in nets for tap in grid.taps if tap <= params.n_layers]
        if not feature_sets:
            raise ValueError("no tap index fits the selected networks")
    else:
        feature_sets = [(None, None, None, xs)]

    if task == "classifier":
        rl = classifier_labeling(train.clinical, grid.horizon_days)
        rows, y = rl.kept, rl.labels
    else:
        rows, y = np.arange(len(train)), None
    if rows.size < grid.fold_count:
        raise ValueError(f"only {rows.size} usable samples for {grid.fold_count} folds")
    folds = kfold_indices(rows.size, grid.fold_count, sub_seed(seed, 4))
    ds = _Downstream(downstream, task, grid, sub_seed(seed, 5))
    hps = _downstream_grid(downstream, task, grid)

    stage2 = []
    for si, (ci, tap, _, feats) in enumerate(feature_sets):
        scores = np.zeros(len(hps))
        epochs = [[] for _ in hps]
        for val in folds:
            fit = np.setdiff1d(np.arange(rows.size), val)
            r_fit, r_val = rows[fit], rows[val]
            f_fit, f_val = feats[r_fit], feats[r_val]
            if ds.scales_features:
                fs = Standardizer.fit(f_fit)
                f_fit, f_val = fs(f_fit), fs(f_val)
            y_fit = None if y is None else y[fit]
            y_val = None if y is None else y[val]
            ds.reset()
            for hi, hp in enumerate(hps):
                audit.check(ids[r_fit], "stage 2 fit")
                val_data = (f_val, times[r_val], events[r_val])
                model, ep = ds.fit(hp, f_fit, times[r_fit], events[r_fit], y_fit, val=val_data)
                scores[hi] += ds.loss(model, f_val, times[r_val], events[r_val], y_val) / len(folds)
                if ep is not None:
                    epochs[hi].append(ep)
        for hi, hp in enumerate(hps):
            stage2.append(dict(feature_set=si, mlp=ci, tap=tap, params=hp,
                               val_loss=float(scores[hi]), best_epochs=epochs[hi]))

    best = min(range(len(stage2)), key=lambda i: stage2[i]["val_loss"])
    win = stage2[best]
    ci, tap, cl_params, feats = feature_sets[win["feature_set"]]
    f_all = feats[rows]
    feature_scaler = None
    if ds.scales_features:
        feature_scaler = Standardizer.fit(f_all)
        f_all = feature_scaler(f_all)
    epochs = max(1, int(round(float(np.median(win["best_epochs"]))))) if win["best_epochs"] else None
    ds.reset()
    audit.check(ids[rows], "final fit")
    model, _ = ds.fit(win["params"], f_all, times[rows], events[rows], y, epochs=epochs)

    selected = {"objective": objective, "downstream": downstream, "params": win["params"],
                "tap": tap, "val_loss": win["val_loss"]}
    if ci is not None:
        c = stage1[ci]
        selected["cl"] = {k: c[k] for k in ("layers", "learning_rate", "l2_weight")}
    feats_full = feats if feature_scaler is None else feature_scaler(feats)
    train_scores = np.asarray(model.predict(feats_full), dtype=float)
    baseline, cutoffs = None, {}
    if task == "cox":
        baseline = breslow_baseline(train_scores, times, events)
        hr = np.exp(train_scores)
        c1, c2 = percentile_cutoffs(hr)
        cutoffs = {"median_hr": float(np.median(hr)), "p73_hr": c1, "p51_hr": c2}
    pm = PrognosisModel(
        method=method or f"{objective}:{downstream}", task=task, gene_ids=train.expression.gene_ids,
        input_scaler=scaler, downstream=model, cl_params=cl_params, tap=tap,
        feature_scaler=feature_scaler, baseline=baseline, cutoffs=cutoffs,
        train_sample_ids=tuple(train.sample_ids), train_scores=train_scores, selected=selected)
    return CVResult(pm, selected, stage1, stage2)


__all__ = ["CVGrid", "CVResult", "METHODS", "OBJECTIVES", "cross_validate", "fit_downstream",
           "group_labels", "sub_seed"]
