"""Dense sigmoid MLP with hand-written backpropagation and plain SGD.

Layers are numbered from 1: layer ``l`` is the ``l``-th affine map and its
activation. Hidden layers use the logistic sigmoid, the last layer is linear.
Inputs may be a single vector or a batch (rows are samples).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

log = logging.getLogger(__name__)

PARAMS_FORMAT_VERSION = 1

Batch = tuple[np.ndarray, Any]
LossFn = Callable[[np.ndarray, Any], tuple[float, np.ndarray]]


class TrainingError(RuntimeError):
    pass


def sigmoid(x):
    # split on sign so exp never overflows
    out = np.empty_like(x, dtype=float)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


@dataclass(frozen=True)
class MLPArchitecture:
    layer_widths: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.layer_widths)
        if len(widths) < 3:
            raise ValueError("an MLP needs an input, at least one hidden layer and an output")
        if any(w < 1 for w in widths):
            raise ValueError("layer widths must be positive")
        object.__setattr__(self, "layer_widths", widths)

    @property
    def n_layers(self) -> int:
        return len(self.layer_widths) - 1

    @property
    def input_width(self) -> int:
        return self.layer_widths[0]


@dataclass
class MLPParams:
    weights: list[np.ndarray]
    biases: list[np.ndarray]

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise ValueError("weights and biases must pair up")
        for l, (w, b) in enumerate(zip(self.weights, self.biases), start=1):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {l}: inconsistent weight/bias shapes {w.shape}, {b.shape}")
            if l > 1 and w.shape[0] != self.weights[l - 2].shape[1]:
                raise ValueError(f"layer {l}: input width does not match previous layer")

    @property
    def architecture(self) -> MLPArchitecture:
        return MLPArchitecture((self.weights[0].shape[0], *(w.shape[1] for w in self.weights)))

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def copy(self) -> "MLPParams":
        return MLPParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])

    def flat(self) -> np.ndarray:
        return np.concatenate([a.ravel() for pair in zip(self.weights, self.biases) for a in pair])

    def sq_norm(self) -> float:
        return float(sum(np.sum(w * w) + np.sum(b * b) for w, b in zip(self.weights, self.biases)))

    def to_dict(self) -> dict:
        return {
            "format_version": PARAMS_FORMAT_VERSION,
            "layer_widths": list(self.architecture.layer_widths),
            "weights": [w.tolist() for w in self.weights],
            "biases": [b.tolist() for b in self.biases],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MLPParams":
        if d.get("format_version") != PARAMS_FORMAT_VERSION:
            raise ValueError(f"unsupported MLP parameter format {d.get('format_version')!r}")
        params = cls([np.array(w, dtype=float).reshape(a, b) for w, a, b in
                      zip(d["weights"], d["layer_widths"][:-1], d["layer_widths"][1:])],
                     [np.array(b, dtype=float) for b in d["biases"]])
        if list(params.architecture.layer_widths) != list(d["layer_widths"]):
            raise ValueError("layer widths do not match weight shapes")
        return params

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s: str) -> "MLPParams":
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 1e-2
    l2_weight: float = 1e-3
    batch_size: int = 32
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0

    def __post_init__(self):
        if not self.learning_rate >= 0:
            raise ValueError("learning_rate must be non-negative")
        if self.l2_weight < 0:
            raise ValueError("l2_weight must be non-negative")
        if self.batch_size < 1 or self.max_epochs < 0 or self.patience < 1:
            raise ValueError("batch_size and patience must be positive, max_epochs non-negative")


def init_params(arch: MLPArchitecture, seed: int) -> MLPParams:
    """Uniform Glorot initialisation; biases start at zero."""
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(arch.layer_widths[:-1], arch.layer_widths[1:]):
        bound = np.sqrt(6.0 / (fan_in + fan_out))
        ws.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return MLPParams(ws, bs)


def _as_batch(params: MLPParams, x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input width {xb.shape[-1]} does not match network input "
                         f"{params.weights[0].shape[0]}")
    return xb, single


def forward(params: MLPParams, x, upto: int | None = None) -> list[np.ndarray]:
    """Return the activations of layers ``1..upto`` (default: all layers).

    For a 1-D ``x`` each activation is a vector, otherwise a matrix with one
    row per sample.
    """
    xb, single = _as_batch(params, x)
    last = params.n_layers
    upto = last if upto is None else upto
    if not 1 <= upto <= last:
        raise ValueError(f"layer index {upto} outside 1..{last}")
    acts = []
    a = xb
    for l in range(upto):
        pre = a @ params.weights[l] + params.biases[l]
        a = pre if l == last - 1 else sigmoid(pre)
        acts.append(a)
    return [a[0] for a in acts] if single else acts


def backward(params: MLPParams, x, upstream_grad, tap: int | None = None,
             l2_weight: float = 0.0, activations: list[np.ndarray] | None = None) -> MLPParams:
    """Gradients of a scalar loss through layers ``1..tap``.

    ``upstream_grad`` is the loss gradient with respect to the output of layer
    ``tap`` (default: the last layer). Layers above the tap receive zero data
    gradient. ``l2_weight * theta`` is added to every parameter's gradient.
    """
    xb, single = _as_batch(params, x)
    tap = params.n_layers if tap is None else tap
    if not 1 <= tap <= params.n_layers:
        raise ValueError(f"tap {tap} outside 1..{params.n_layers}")
    delta = np.asarray(upstream_grad, dtype=float)
    if single:
        delta = delta[None, :]
    if delta.shape != (xb.shape[0], params.weights[tap - 1].shape[1]):
        raise ValueError(f"upstream gradient shape {delta.shape} does not match layer {tap} "
                         f"output {(xb.shape[0], params.weights[tap - 1].shape[1])}")
    if activations is None:
        activations = forward(params, xb, upto=tap)
    gw = [l2_weight * w for w in params.weights]
    gb = [l2_weight * b for b in params.biases]
    for l in range(tap - 1, -1, -1):
        if l != params.n_layers - 1:
            s = activations[l]
            delta = delta * s * (1.0 - s)
        inp = xb if l == 0 else activations[l - 1]
        gw[l] = gw[l] + inp.T @ delta
        gb[l] = gb[l] + delta.sum(axis=0)
        if l > 0:
            delta = delta @ params.weights[l].T
    return MLPParams(gw, gb)


def minibatches(x: np.ndarray, target: Callable[[np.ndarray], Any] | None, batch_size: int):
    """Batcher for :func:`train`: seeded reshuffle each epoch, last short batch kept.

    ``target(idx)`` builds the loss payload for the rows ``idx``; with ``None``
    the payload is the index array itself.
    """
    n = x.shape[0]

    def batches(rng: np.random.Generator) -> Iterable[Batch]:
        perm = rng.permutation(n)
        for s in range(0, n, batch_size):
            idx = perm[s:s + batch_size]
            yield x[idx], (idx if target is None else target(idx))

    return batches


@dataclass
class TrainResult:
    params: MLPParams
    train_loss: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False


def train(params: MLPParams,
          batches: Callable[[np.random.Generator], Iterable[Batch]] | Sequence[Batch],
          loss_fn: LossFn,
          cfg: TrainConfig,
          validation_fn: Callable[[MLPParams], float] | None = None,
          tap: int | None = None) -> TrainResult:
    """Plain SGD with l2 penalty and early stopping on ``validation_fn``.

    ``batches`` is either a fixed sequence of ``(x, payload)`` pairs or a
    callable that receives the epoch RNG and yields them. ``loss_fn(z,
    payload)`` returns the data loss and its gradient w.r.t. ``z``, the
    output of layer ``tap``. The returned parameters come from the epoch with
    the lowest validation loss (or the last epoch without a validation
    function).
    """
    rng = np.random.default_rng(cfg.seed)
    tap = params.n_layers if tap is None else tap
    cur = params.copy()
    best = cur.copy()
    result = TrainResult(best)
    best_val = np.inf
    wait = 0
    for epoch in range(1, cfg.max_epochs + 1):
        epoch_batches = batches(rng) if callable(batches) else batches
        losses = []
        for b, (xb, payload) in enumerate(epoch_batches):
            acts = forward(cur, xb, upto=tap)
            loss, dz = loss_fn(acts[-1], payload)
            loss = float(loss) + 0.5 * cfg.l2_weight * cur.sq_norm()
            if not np.isfinite(loss) or not np.all(np.isfinite(dz)):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {b}")
            grads = backward(cur, xb, dz, tap=tap, l2_weight=cfg.l2_weight, activations=acts)
            lr = cfg.learning_rate
            cur = MLPParams([w - lr * g for w, g in zip(cur.weights, grads.weights)],
                            [c - lr * g for c, g in zip(cur.biases, grads.biases)])
            losses.append(loss)
        result.train_loss.append(float(np.mean(losses)) if losses else float("nan"))
        if validation_fn is None:
            best, result.best_epoch = cur, epoch
            continue
        val = float(validation_fn(cur))
        if not np.isfinite(val):
            raise TrainingError(f"non-finite validation loss at epoch {epoch}")
        result.val_loss.append(val)
        if val < best_val:
            best_val, best, result.best_epoch, wait = val, cur, epoch, 0
        else:
            wait += 1
            if wait >= cfg.patience:
                result.stopped_early = True
                log.debug("early stop after epoch %d (best %d)", epoch, result.best_epoch)
                break
    result.params = best.copy()
    return result
