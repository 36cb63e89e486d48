"""Supervised contrastive representation learning over expression vectors.

Samples are grouped by progression-free interval into quantile groups of about
``target_group_size`` samples; group index is the class label the contrastive
loss pulls together.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass

import numpy as np

from .neural import MLPArchitecture, MLPParams, TrainConfig, TrainResult, forward, init_params, train

log = logging.getLogger(__name__)


class DegenerateBatchError(ValueError):
    pass


@dataclass(frozen=True)
class SupConConfig:
    temperature: float = 0.1
    target_group_size: int = 15
    batch_size: int = 64
    normalize_embeddings: bool = True

    def __post_init__(self):
        if not self.temperature > 0:
            raise ValueError("temperature must be positive")
        if self.batch_size < 2:
            raise ValueError("batch_size must be at least 2")
        if self.target_group_size < 1:
            raise ValueError("target_group_size must be positive")


@dataclass(frozen=True)
class GroupLabeling:
    labels: np.ndarray
    m: int
    group_sizes: tuple[int, ...]
    # largest time in each group, in group order
    upper_times: tuple[float, ...] = ()

    def assign(self, times) -> np.ndarray:
        """Map new times onto these groups by the training time boundaries."""
        bounds = np.asarray(self.upper_times[:-1])
        return np.searchsorted(bounds, np.asarray(times, dtype=float), side="left")


@dataclass(frozen=True)
class EmbeddingTap:
    layer_index: int

    def validate(self, params: MLPParams) -> None:
        if not 1 <= self.layer_index <= params.n_layers:
            raise ValueError(f"tap {self.layer_index} outside 1..{params.n_layers}")


def assign_pfi_groups(times, target_group_size: int = 15) -> GroupLabeling:
    """Split samples, sorted by time, into ``m`` near-equal contiguous groups.

    ``m = max(2, round(n / target_group_size))``; the first ``n mod m`` groups
    receive one extra sample. The sort is stable, so tied times keep their
    input order and may straddle a group boundary.
    """
    t = np.asarray(times, dtype=float)
    n = t.shape[0]
    if n < 2:
        raise ValueError("need at least two samples to form groups")
    if not np.all(np.isfinite(t)):
        raise ValueError("times must be finite")
    m = min(n, max(2, int(np.floor(n / target_group_size + 0.5))))
    q, r = divmod(n, m)
    sizes = tuple(q + 1 if g < r else q for g in range(m))
    order = np.argsort(t, kind="stable")
    sorted_labels = np.repeat(np.arange(m), sizes)
    labels = np.empty(n, dtype=int)
    labels[order] = sorted_labels
    ends = np.cumsum(sizes) - 1
    upper = tuple(float(t[order[e]]) for e in ends)
    return GroupLabeling(labels, m, sizes, upper)


def supcon_loss(z, labels, cfg: SupConConfig = SupConConfig()) -> tuple[float, np.ndarray]:
    """Supervised contrastive loss summed over anchors, and its gradient.

    Anchors without a positive in the batch contribute nothing. With
    ``cfg.normalize_embeddings`` each row is L2-normalised first and the
    gradient is propagated through the normalisation.

    Raises:
        DegenerateBatchError: if no anchor has a positive.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(labels)
    if z.ndim != 2 or z.shape[0] != y.shape[0]:
        raise ValueError("embeddings must be (batch, dim) aligned with labels")
    if z.shape[0] < 2:
        raise DegenerateBatchError("degenerate batch: fewer than two samples")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite embedding")
    n = z.shape[0]
    if cfg.normalize_embeddings:
        norms = np.linalg.norm(z, axis=1, keepdims=True)
        if np.any(norms == 0):
            raise ValueError("cannot normalise a zero embedding")
        u = z / norms
    else:
        u = z
    tau = cfg.temperature
    off = ~np.eye(n, dtype=bool)
    pos = (y[:, None] == y[None, :]) & off
    n_pos = pos.sum(axis=1)
    valid = n_pos > 0
    if not valid.any():
        raise DegenerateBatchError("degenerate batch: no anchor has a positive")

    s = (u @ u.T) / tau
    s_off = np.where(off, s, -np.inf)
    row_max = s_off.max(axis=1, keepdims=True)
    ex = np.exp(s_off - row_max)
    denom = ex.sum(axis=1, keepdims=True)
    log_denom = np.log(denom) + row_max
    log_prob = s - log_denom
    w = np.where(valid, 1.0 / np.maximum(n_pos, 1), 0.0)
    loss = -float(np.sum(w * np.where(pos, log_prob, 0.0).sum(axis=1)))

    # dL/ds_ij for anchor i: softmax weight minus the positive share
    coef = valid[:, None] * (ex / denom - pos * w[:, None])
    grad_u = (coef + coef.T) @ u / tau
    if cfg.normalize_embeddings:
        radial = np.sum(grad_u * u, axis=1, keepdims=True)
        grad = (grad_u - u * radial) / norms
    else:
        grad = grad_u
    return loss, grad


def _degenerate(labels: np.ndarray) -> bool:
    return labels.shape[0] < 2 or np.unique(labels).shape[0] == labels.shape[0]


def make_batches(labels, batch_size: int, seed: int) -> list[np.ndarray]:
    """Seeded shuffled mini-batches that each contain at least one positive pair.

    A batch whose labels are all distinct gets one retry by reshuffling the
    indices from that batch onward; if it is still degenerate it is dropped.
    """
    if batch_size < 2:
        raise ValueError("batch_size must be at least 2")
    y = np.asarray(labels.labels if isinstance(labels, GroupLabeling) else labels)
    rng = np.random.default_rng(seed)
    return _batches_from_rng(y, batch_size, rng)


def _batches_from_rng(y: np.ndarray, batch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    n = y.shape[0]
    perm = rng.permutation(n)
    out, dropped = [], 0
    for s in range(0, n, batch_size):
        idx = perm[s:s + batch_size]
        if _degenerate(y[idx]):
            perm[s:] = rng.permutation(perm[s:])
            idx = perm[s:s + batch_size]
            if _degenerate(y[idx]):
                dropped += 1
                continue
        out.append(idx.copy())
    if dropped:
        log.debug("dropped %d degenerate batch(es)", dropped)
    return out


def mean_supcon(params: MLPParams, x: np.ndarray, labels: np.ndarray, cfg: SupConConfig) -> float:
    """Per-anchor mean contrastive loss of the whole set, used for validation."""
    z = forward(params, x)[-1]
    loss, _ = supcon_loss(z, labels, cfg)
    y = np.asarray(labels)
    same = (y[:, None] == y[None, :]).sum(axis=1) - 1
    return loss / max(int(np.sum(same > 0)), 1)


def train_cl(x: np.ndarray, labels: np.ndarray, arch: MLPArchitecture, train_cfg: TrainConfig,
             supcon_cfg: SupConConfig = SupConConfig(), validation: tuple[np.ndarray, np.ndarray] | None = None,
             params: MLPParams | None = None) -> TrainResult:
    """Train an MLP on ``x`` with the supervised contrastive loss.

    Args:
        x: training inputs, one row per sample.
        labels: group label per row (see :func:`assign_pfi_groups`).
        arch: network shape; ``arch.input_width`` must equal ``x.shape[1]``.
        train_cfg: SGD settings. ``train_cfg.seed`` seeds initialisation and batching.
        supcon_cfg: loss settings; its ``batch_size`` is the mini-batch size.
        validation: optional ``(x_val, labels_val)`` for early stopping.
        params: start from these parameters instead of a fresh initialisation.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(labels)
    if params is None:
        params = init_params(arch, train_cfg.seed)

    def batches(rng):
        for idx in _batches_from_rng(y, supcon_cfg.batch_size, rng):
            yield x[idx], y[idx]

    def loss_fn(z, yb):
        return supcon_loss(z, yb, supcon_cfg)

    val_fn = None
    if validation is not None:
        xv, yv = np.asarray(validation[0], dtype=float), np.asarray(validation[1])
        if _degenerate(yv):
            log.debug("validation labels have no positive pair; training without early stopping")
        else:
            val_fn = lambda p: mean_supcon(p, xv, yv, supcon_cfg)  # noqa: E731
    return train(params, batches, loss_fn, train_cfg, validation_fn=val_fn)


def extract_features(params: MLPParams, tap: EmbeddingTap | int, x) -> np.ndarray:
    """Activations of the tapped layer, one row per sample, unnormalised."""
    tap = tap if isinstance(tap, EmbeddingTap) else EmbeddingTap(int(tap))
    tap.validate(params)
    x = np.asarray(x, dtype=float)
    return forward(params, x if x.ndim == 2 else x[None, :], upto=tap.layer_index)[-1]


def write_groups_tsv(sample_ids, labeling: GroupLabeling, times, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["sample_id", "time_days", "group"])
        for sid, t, g in zip(sample_ids, np.asarray(times), labeling.labels):
            w.writerow([sid, repr(float(t)), int(g)])


def write_features_tsv(sample_ids, features: np.ndarray, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["sample_id", *(f"f{j}" for j in range(features.shape[1]))])
        for sid, row in zip(sample_ids, features):
            w.writerow([sid, *(repr(float(v)) for v in row)])
