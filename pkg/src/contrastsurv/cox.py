"""Cox proportional-hazards models: partial likelihood, fitting, baseline hazard.

Risk sets are ``R(t) = {j : t_j >= t}`` and tied event times share one risk
set (Breslow's approximation) throughout.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .neural import MLPArchitecture, MLPParams, TrainConfig, forward, init_params, train

log = logging.getLogger(__name__)


class CoxFitError(RuntimeError):
    pass


def _check_survival_inputs(f, times, events):
    f = np.asarray(f, dtype=float).ravel()
    t = np.asarray(times, dtype=float).ravel()
    d = np.asarray(events).astype(bool).ravel()
    if not (f.shape == t.shape == d.shape):
        raise ValueError("scores, times and events must be aligned")
    if not d.any():
        raise ValueError("at least one event is required")
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite score")
    return f, t, d


@dataclass(frozen=True)
class _RiskSets:
    """Sorted view of the data with the log risk-set sum attached to every subject."""

    order: np.ndarray        # ascending time order
    last: np.ndarray         # per sorted position: is this the last subject at its time
    log_risk: np.ndarray     # per sorted position: log sum_{t_j >= t} exp(f_j)


def _risk_sets(f, t) -> _RiskSets:
    order = np.argsort(t, kind="stable")
    ts = t[order]
    # a reverse running log-sum-exp keeps every risk set on its own scale
    tail = np.logaddexp.accumulate(f[order][::-1])[::-1]
    starts = np.r_[True, ts[1:] != ts[:-1]]
    first = np.maximum.accumulate(np.where(starts, np.arange(ts.size), 0))
    last = np.r_[ts[1:] != ts[:-1], True]
    return _RiskSets(order, last, tail[first])


def _tied_log_cumsum(log_terms: np.ndarray, last: np.ndarray) -> np.ndarray:
    """log of the running sum up to the end of each subject's tie block."""
    c = np.logaddexp.accumulate(log_terms)
    return np.minimum.accumulate(np.where(last, c, np.inf)[::-1])[::-1]


def neg_log_partial_likelihood(f, times, events) -> tuple[float, np.ndarray]:
    """Negative log partial likelihood of scores ``f`` and its gradient."""
    f, t, d = _check_survival_inputs(f, times, events)
    rs = _risk_sets(f, t)
    fs = f[rs.order]
    ds = d[rs.order]
    value = -float(np.sum(fs[ds] - rs.log_risk[ds]))
    # each subject's exp-score times the sum of 1/risk over events at or before its time
    lc = _tied_log_cumsum(np.where(ds, -rs.log_risk, -np.inf), rs.last)
    grad_sorted = np.exp(fs + lc) - ds
    grad = np.empty_like(f)
    grad[rs.order] = grad_sorted
    return value, grad


def neg_log_partial_likelihood_hessian_diag(f, times, events) -> np.ndarray:
    """Exact diagonal of the Hessian of :func:`neg_log_partial_likelihood`."""
    f, t, d = _check_survival_inputs(f, times, events)
    rs = _risk_sets(f, t)
    ds = d[rs.order]
    fs = f[rs.order]
    lc1 = _tied_log_cumsum(np.where(ds, -rs.log_risk, -np.inf), rs.last)
    lc2 = _tied_log_cumsum(np.where(ds, -2.0 * rs.log_risk, -np.inf), rs.last)
    h_sorted = np.exp(fs + lc1) - np.exp(2.0 * fs + lc2)
    h = np.empty_like(f)
    h[rs.order] = np.maximum(h_sorted, 0.0)
    return h


# ---------------------------------------------------------------------------
# Models

@dataclass
class CoxLinearModel:
    coefficients: np.ndarray
    lam: float = 0.0
    alpha: float = 1.0
    n_iter: int = 0
    objective_history: list[float] = field(default_factory=list, repr=False)

    kind = "linear"

    @property
    def n_features(self) -> int:
        return self.coefficients.shape[0]

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.n_features:
            raise ValueError(f"model expects {self.n_features} features, got {x.shape[1]}")
        return x @ self.coefficients

    def to_dict(self) -> dict:
        return {"type": "cox_linear", "coefficients": self.coefficients.tolist(),
                "lambda": self.lam, "alpha": self.alpha}

    @classmethod
    def from_dict(cls, d: dict) -> "CoxLinearModel":
        return cls(np.array(d["coefficients"], dtype=float), d["lambda"], d["alpha"])


@dataclass
class CoxNeuralModel:
    mlp: MLPParams
    train_cfg: TrainConfig | None = None
    best_epoch: int = 0

    kind = "neural"

    def __post_init__(self):
        if self.mlp.architecture.layer_widths[-1] != 1:
            raise ValueError("a neural Cox model needs a single linear output")

    @property
    def n_features(self) -> int:
        return self.mlp.architecture.input_width

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return forward(self.mlp, x)[-1][:, 0]

    def to_dict(self) -> dict:
        return {"type": "cox_neural", "mlp": self.mlp.to_dict()}

    @classmethod
    def from_dict(cls, d: dict) -> "CoxNeuralModel":
        return cls(MLPParams.from_dict(d["mlp"]))


def soft_threshold(x, k):
    return np.sign(x) * np.maximum(np.abs(x) - k, 0.0)


def fit_cox_en(x, times, events, lam: float, alpha: float, tol: float = 1e-6,
               max_iter: int = 5000, standardize: bool = False,
               init: np.ndarray | None = None) -> CoxLinearModel:
    """Elastic-net Cox regression by proximal gradient descent.

    Minimises ``nll(X theta) / n + lam * (alpha * |theta|_1 + (1 - alpha) / 2 * |theta|_2^2)``.
    The ridge part is treated as smooth; the l1 part by soft thresholding.
    Step sizes come from a halving backtracking search, so the objective is
    non-increasing across iterations. Converged when the largest coefficient
    change falls below ``tol``.

    With ``standardize`` the problem is solved on unit-variance columns and the
    coefficients are mapped back to the original scale.

    Raises:
        CoxFitError: if the objective becomes non-finite.
    """
    if lam < 0 or not 0 <= alpha <= 1:
        raise ValueError("need lam >= 0 and 0 <= alpha <= 1")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.asarray(times, dtype=float)
    d = np.asarray(events).astype(bool)
    n, p = x.shape
    scale = np.ones(p)
    if standardize:
        sd = x.std(axis=0)
        scale = np.where(sd > 0, sd, 1.0)
    xs = (x - x.mean(axis=0)) / scale
    l1 = lam * alpha
    l2 = lam * (1.0 - alpha)

    def smooth(theta):
        v, g = neg_log_partial_likelihood(xs @ theta, t, d)
        return v / n + 0.5 * l2 * theta @ theta, xs.T @ g / n + l2 * theta

    def objective(theta, sm):
        return sm + l1 * np.abs(theta).sum()

    theta = np.zeros(p) if init is None else np.asarray(init, dtype=float) * scale
    fval, grad = smooth(theta)
    history = [objective(theta, fval)]
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        step *= 2.0
        while True:
            cand = soft_threshold(theta - step * grad, step * l1)
            diff = cand - theta
            try:
                fc, gc = smooth(cand)
            except ValueError:
                fc = np.inf
            if np.isfinite(fc) and fc <= fval + grad @ diff + (diff @ diff) / (2 * step) + 1e-15 * abs(fval):
                break
            step *= 0.5
            if step < 1e-20:
                raise CoxFitError(f"line search failed at iteration {it}")
        obj = objective(cand, fc)
        if not np.isfinite(obj):
            raise CoxFitError(f"objective diverged at iteration {it}")
        theta, fval, grad = cand, fc, gc
        history.append(obj)
        if np.max(np.abs(diff)) < tol:
            break
    return CoxLinearModel(theta / scale, float(lam), float(alpha), it, history)


def fit_cox_nn(x, times, events, arch: MLPArchitecture, train_cfg: TrainConfig,
               validation: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None,
               params: MLPParams | None = None) -> CoxNeuralModel:
    """Train a sigmoid MLP on the Cox loss, full batch.

    The training loss is the negative log partial likelihood divided by the
    number of samples. ``validation = (x_val, times_val, events_val)``
    enables early stopping on the validation partial likelihood.
    """
    if arch.layer_widths[-1] != 1:
        raise ValueError("Cox network must have one output")
    x = np.atleast_2d(np.asarray(x, dtype=float))
    t = np.asarray(times, dtype=float)
    d = np.asarray(events)
    n = x.shape[0]
    if params is None:
        params = init_params(arch, train_cfg.seed)

    def loss_fn(z, _):
        v, g = neg_log_partial_likelihood(z[:, 0], t, d)
        return v / n, (g / n)[:, None]

    val_fn = None
    if validation is not None:
        xv, tv, dv = validation
        if np.asarray(dv).astype(bool).any():
            def val_fn(p):
                return neg_log_partial_likelihood(forward(p, xv)[-1][:, 0], tv, dv)[0] / len(tv)
    res = train(params, [(x, None)], loss_fn, train_cfg, validation_fn=val_fn)
    return CoxNeuralModel(res.params, train_cfg, res.best_epoch)


# ---------------------------------------------------------------------------
# Baseline hazard and survival

@dataclass(frozen=True)
class BaselineHazard:
    event_times: np.ndarray
    cumhaz: np.ndarray

    def __call__(self, t) -> np.ndarray:
        """Right-continuous step evaluation; zero before the first event."""
        idx = np.searchsorted(self.event_times, np.asarray(t, dtype=float), side="right")
        return np.r_[0.0, self.cumhaz][idx]

    def to_dict(self) -> dict:
        return {"event_times": self.event_times.tolist(), "cumhaz": self.cumhaz.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "BaselineHazard":
        return cls(np.array(d["event_times"], dtype=float), np.array(d["cumhaz"], dtype=float))


def breslow_baseline(f, times, events) -> BaselineHazard:
    """Breslow estimate of the cumulative baseline hazard from training scores."""
    f, t, d = _check_survival_inputs(f, times, events)
    rs = _risk_sets(f, t)
    ts = t[rs.order]
    ds = d[rs.order]
    uniq = np.unique(ts[ds])
    pos = np.searchsorted(ts, uniq, side="left")
    counts = np.array([np.sum(ds & (ts == u)) for u in uniq], dtype=float)
    incr = counts * np.exp(-rs.log_risk[pos])
    return BaselineHazard(uniq, np.cumsum(incr))


@dataclass(frozen=True)
class SurvivalCurve:
    """Survival probabilities, one row per subject, at ``times``."""

    times: np.ndarray
    survival: np.ndarray

    def at(self, t: float) -> np.ndarray:
        idx = np.searchsorted(self.times, t, side="right") - 1
        if idx < 0:
            return np.ones(self.survival.shape[0])
        return self.survival[:, idx]


def survival_function(h0: BaselineHazard, f) -> SurvivalCurve:
    """``S_i(t) = exp(-H0(t) * exp(f_i))`` at time 0 and every baseline step."""
    f = np.atleast_1d(np.asarray(f, dtype=float))
    times = h0.event_times
    cum = h0.cumhaz
    if times.size == 0 or times[0] > 0:
        times = np.r_[0.0, times]
        cum = np.r_[0.0, cum]
    surv = np.exp(-np.outer(np.exp(f), cum))
    return SurvivalCurve(times, surv)


def predict_risk(model, x) -> tuple[np.ndarray, np.ndarray]:
    """Log relative hazard and hazard ratio per sample."""
    f = np.asarray(model.predict(x), dtype=float)
    return f, np.exp(f)


def model_to_dict(model) -> dict:
    return model.to_dict()


def model_from_dict(d: dict):
    from .gbdt import GBTEnsemble

    kinds = {"cox_linear": CoxLinearModel, "cox_neural": CoxNeuralModel, "gbt": GBTEnsemble}
    try:
        return kinds[d["type"]].from_dict(d)
    except KeyError:
        raise ValueError(f"unknown model type {d.get('type')!r}") from None
