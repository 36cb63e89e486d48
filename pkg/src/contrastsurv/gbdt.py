"""Second-order gradient-boosted regression trees with exact greedy splits.

Two objectives: ``"logistic"`` (labels in {0, 1}) and ``"cox"`` (target is a
``(times, events)`` pair; boosts the negative log partial likelihood).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .cox import neg_log_partial_likelihood, neg_log_partial_likelihood_hessian_diag
from .neural import sigmoid

OBJECTIVES = ("logistic", "cox")


def grad_hess_logistic(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    p = sigmoid(np.asarray(scores, dtype=float))
    y = np.asarray(labels, dtype=float)
    return p - y, p * (1.0 - p)


def grad_hess_cox(scores, times, events) -> tuple[np.ndarray, np.ndarray]:
    """Gradient and exact Hessian diagonal of the Cox loss; off-diagonals dropped."""
    _, g = neg_log_partial_likelihood(scores, times, events)
    h = neg_log_partial_likelihood_hessian_diag(scores, times, events)
    return g, h


def logistic_loss(scores, labels) -> float:
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels, dtype=float)
    return float(np.mean(np.logaddexp(0.0, s) - y * s))


@dataclass(frozen=True)
class GBTConfig:
    max_depth: int = 3
    n_trees: int = 200
    learning_rate: float = 0.1
    l2: float = 1.0
    subsample: float = 1.0
    min_child_weight: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.max_depth < 1 or self.n_trees < 0:
            raise ValueError("max_depth must be positive and n_trees non-negative")
        if not self.learning_rate > 0 or self.l2 < 0 or self.min_child_weight < 0:
            raise ValueError("invalid learning_rate, l2 or min_child_weight")
        if not 0 < self.subsample <= 1:
            raise ValueError("subsample must lie in (0, 1]")


@dataclass
class RegressionTree:
    """Flat binary tree. ``feature[i] == -1`` marks a leaf; ``x < threshold`` goes left."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return self.feature.shape[0]

    @property
    def is_leaf(self) -> np.ndarray:
        return self.feature < 0

    def depth(self, node: int = 0) -> int:
        if self.feature[node] < 0:
            return 0
        return 1 + max(self.depth(self.left[node]), self.depth(self.right[node]))

    def predict(self, x: np.ndarray) -> np.ndarray:
        node = np.zeros(x.shape[0], dtype=int)
        active = self.feature[node] >= 0
        while active.any():
            rows = np.flatnonzero(active)
            nd = node[rows]
            go_left = x[rows, self.feature[nd]] < self.threshold[nd]
            node[rows] = np.where(go_left, self.left[nd], self.right[nd])
            active = self.feature[node] >= 0
        return self.value[node]

    def used_features(self) -> set[int]:
        return {int(f) for f in self.feature if f >= 0}

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in ("feature", "threshold", "left", "right", "value")}

    @classmethod
    def from_dict(cls, d: dict) -> "RegressionTree":
        return cls(np.array(d["feature"], dtype=int), np.array(d["threshold"], dtype=float),
                   np.array(d["left"], dtype=int), np.array(d["right"], dtype=int),
                   np.array(d["value"], dtype=float))


def leaf_weight(g_sum: float, h_sum: float, l2: float) -> float:
    return -g_sum / (h_sum + l2) if h_sum + l2 > 0 else 0.0


def _score(g, h, l2):
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(h + l2 > 0, g * g / (h + l2), 0.0)


@dataclass(frozen=True)
class Split:
    feature: int
    threshold: float
    gain: float


def best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray, l2: float,
               min_child_weight: float) -> Split | None:
    """Best exact split of the rows given, or ``None`` if no split has positive gain.

    Candidates are midpoints between consecutive distinct sorted values of
    each feature. Ties in gain resolve to the lowest feature index, then the
    lowest threshold.
    """
    n, p = x.shape
    if n < 2:
        return None
    G, H = g.sum(), h.sum()
    parent = float(_score(G, H, l2))
    order = np.argsort(x, axis=0, kind="stable")
    xs = np.take_along_axis(x, order, axis=0)
    gl = np.cumsum(g[order], axis=0)[:-1]
    hl = np.cumsum(h[order], axis=0)[:-1]
    gr, hr = G - gl, H - hl
    gain = 0.5 * (_score(gl, hl, l2) + _score(gr, hr, l2) - parent)
    ok = (xs[1:] > xs[:-1]) & (hl >= min_child_weight) & (hr >= min_child_weight)
    gain = np.where(ok, gain, -np.inf)
    # float noise must not pass for structure
    eps = 1e-12 * max(1.0, abs(parent))
    cand = gain.T.ravel()
    top = cand.max()
    # one row partition can come from several features; rounding must not break the tie order
    flat = np.flatnonzero(cand >= top - 1e-12 * max(1.0, abs(top)))[0] if np.isfinite(top) else 0
    j, k = divmod(int(flat), n - 1)
    best = gain[k, j]
    if not best > eps:
        return None
    return Split(j, 0.5 * (xs[k, j] + xs[k + 1, j]), float(best))


def build_tree(x, g, h, cfg: GBTConfig) -> RegressionTree:
    """Grow one tree depth-first by exact greedy second-order splitting."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    g = np.asarray(g, dtype=float)
    h = np.asarray(h, dtype=float)
    feature, threshold, left, right, value = [], [], [], [], []

    def grow(rows: np.ndarray, depth: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(leaf_weight(g[rows].sum(), h[rows].sum(), cfg.l2))
        if depth >= cfg.max_depth:
            return node
        split = best_split(x[rows], g[rows], h[rows], cfg.l2, cfg.min_child_weight)
        if split is None:
            return node
        mask = x[rows, split.feature] < split.threshold
        feature[node] = split.feature
        threshold[node] = split.threshold
        left[node] = grow(rows[mask], depth + 1)
        right[node] = grow(rows[~mask], depth + 1)
        return node

    grow(np.arange(x.shape[0]), 0)
    return RegressionTree(np.array(feature, dtype=int), np.array(threshold),
                          np.array(left, dtype=int), np.array(right, dtype=int), np.array(value))


@dataclass
class GBTEnsemble:
    trees: list[RegressionTree]
    learning_rate: float
    base_score: float
    objective: str
    n_features: int
    train_loss: list[float] = field(default_factory=list, repr=False)

    kind = "boosted"

    def predict(self, x) -> np.ndarray:
        return predict_gbt(self, x)

    def to_dict(self) -> dict:
        return {"type": "gbt", "objective": self.objective, "learning_rate": self.learning_rate,
                "base_score": self.base_score, "n_features": self.n_features,
                "trees": [t.to_dict() for t in self.trees]}

    @classmethod
    def from_dict(cls, d: dict) -> "GBTEnsemble":
        return cls([RegressionTree.from_dict(t) for t in d["trees"]], d["learning_rate"],
                   d["base_score"], d["objective"], d["n_features"])


def fit_gbt(x, target, objective: str, cfg: GBTConfig = GBTConfig()) -> GBTEnsemble:
    """Boost ``cfg.n_trees`` trees on ``objective``.

    ``target`` is the label vector for ``"logistic"`` or ``(times, events)``
    for ``"cox"``. Rows are subsampled without replacement per tree when
    ``cfg.subsample < 1``.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    n = x.shape[0]
    if objective == "logistic":
        y = np.asarray(target, dtype=float)
        if y.shape != (n,) or not np.all(np.isin(y, (0, 1))):
            raise ValueError("logistic target must be 0/1 labels aligned with x")
        mean = np.clip(y.mean(), 1e-6, 1 - 1e-6)
        base = float(np.log(mean / (1 - mean)))

        def grad_hess(s, rows):
            return grad_hess_logistic(s[rows], y[rows])

        def loss(s):
            return logistic_loss(s, y)
    else:
        times, events = (np.asarray(a) for a in target)
        if times.shape != (n,) or events.shape != (n,):
            raise ValueError("cox target must be (times, events) aligned with x")
        if not events.astype(bool).any():
            raise ValueError("at least one event is required")
        base = 0.0

        def grad_hess(s, rows):
            if not events[rows].astype(bool).any():
                return None
            return grad_hess_cox(s[rows], times[rows], events[rows])

        def loss(s):
            return neg_log_partial_likelihood(s, times, events)[0]

    rng = np.random.default_rng(cfg.seed)
    scores = np.full(n, base)
    trees: list[RegressionTree] = []
    history = [loss(scores)]
    n_sub = max(2, int(round(cfg.subsample * n)))
    for _ in range(cfg.n_trees):
        rows = np.arange(n) if cfg.subsample >= 1 else np.sort(rng.choice(n, n_sub, replace=False))
        gh = grad_hess(scores, rows)
        if gh is None:
            continue
        tree = build_tree(x[rows], gh[0], gh[1], cfg)
        trees.append(tree)
        scores = scores + cfg.learning_rate * tree.predict(x)
        history.append(loss(scores))
    return GBTEnsemble(trees, cfg.learning_rate, base, objective, x.shape[1], history)


def predict_gbt(ensemble: GBTEnsemble, x) -> np.ndarray:
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if x.shape[1] != ensemble.n_features:
        raise ValueError(f"ensemble expects {ensemble.n_features} features, got {x.shape[1]}")
    out = np.full(x.shape[0], ensemble.base_score)
    for t in ensemble.trees:
        out = out + ensemble.learning_rate * t.predict(x)
    return out
