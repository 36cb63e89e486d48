"""Evaluation statistics: concordance, Kaplan-Meier, Brier score, ROC, rank tests."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .cox import SurvivalCurve


class MetricError(ValueError):
    pass


def concordance_index(risk, times, events) -> float:
    """Harrell's c-index; tied risks within a comparable pair count one half.

    A pair ``(i, j)`` is comparable when ``t_i < t_j`` and subject ``i`` had
    the event; it is concordant when ``risk_i > risk_j``.
    """
    r = np.asarray(risk, dtype=float)
    t = np.asarray(times, dtype=float)
    d = np.asarray(events).astype(bool)
    comp = (t[:, None] < t[None, :]) & d[:, None]
    n_comp = comp.sum()
    if n_comp == 0:
        raise MetricError("no comparable pairs")
    conc = np.sum(comp & (r[:, None] > r[None, :]))
    ties = np.sum(comp & (r[:, None] == r[None, :]))
    return float((conc + 0.5 * ties) / n_comp)


@dataclass(frozen=True)
class KMCurve:
    """Product-limit curve at every distinct observed time.

    ``survival[k]`` is the value on ``[times[k], times[k+1])``.
    """

    times: np.ndarray
    survival: np.ndarray
    at_risk: np.ndarray
    events: np.ndarray

    def __call__(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return np.r_[1.0, self.survival][idx]

    def left_limit(self, t) -> np.ndarray:
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="left")
        return np.r_[1.0, self.survival][idx]

    def to_csv_rows(self):
        yield ("time", "survival", "at_risk")
        for t, s, n in zip(self.times, self.survival, self.at_risk):
            yield (repr(float(t)), repr(float(s)), int(n))


def km_estimator(times, events) -> KMCurve:
    t = np.asarray(times, dtype=float)
    d = np.asarray(events).astype(int)
    if t.size == 0:
        raise MetricError("empty sample")
    uniq, inv = np.unique(t, return_inverse=True)
    n_events = np.bincount(inv, weights=d, minlength=uniq.size)
    n_obs = np.bincount(inv, minlength=uniq.size)
    at_risk = t.size - np.r_[0, np.cumsum(n_obs)[:-1]]
    surv = np.cumprod(1.0 - n_events / at_risk)
    return KMCurve(uniq, surv, at_risk.astype(int), n_events.astype(int))


def censoring_km(times, events) -> KMCurve:
    """Kaplan-Meier estimate of the censoring survival function G."""
    return km_estimator(times, 1 - np.asarray(events).astype(int))


def brier_score(t: float, surv_at_t, times, events, g: KMCurve) -> float:
    """Inverse-probability-of-censoring weighted Brier score at time ``t``.

    Subjects with an event by ``t`` are weighted by ``1 / G(t_i-)``, subjects
    still at risk after ``t`` by ``1 / G(t)``; others (censored before ``t``)
    contribute zero.
    """
    s = np.asarray(surv_at_t, dtype=float)
    ti = np.asarray(times, dtype=float)
    di = np.asarray(events).astype(bool)
    died = (ti <= t) & di
    alive = ti > t
    total = 0.0
    if died.any():
        g_i = g.left_limit(ti[died])
        if np.any(g_i <= 0):
            raise MetricError(f"censoring survival is zero before time {ti[died][g_i <= 0][0]}")
        total += np.sum(s[died] ** 2 / g_i)
    if alive.any():
        g_t = float(g(t))
        if g_t <= 0:
            raise MetricError(f"censoring survival is zero at time {t}")
        total += np.sum((1.0 - s[alive]) ** 2) / g_t
    return float(total / s.shape[0])


def ibs_horizon(train_times, train_events, test_times, min_risk_set: int = 20) -> float:
    """``min(t_max, max test time)`` where ``t_max`` is the latest training event
    time whose risk set still holds ``min_risk_set`` subjects."""
    tr = np.asarray(train_times, dtype=float)
    ev = np.asarray(train_events).astype(bool)
    ev_times = np.unique(tr[ev])
    n_at_risk = np.array([np.sum(tr >= u) for u in ev_times])
    ok = ev_times[n_at_risk >= min_risk_set]
    if ok.size == 0:
        raise MetricError(f"no training event time has a risk set of at least {min_risk_set}")
    return float(min(ok.max(), np.max(test_times)))


def trapezoid_average(grid, values) -> float:
    grid = np.asarray(grid, dtype=float)
    values = np.asarray(values, dtype=float)
    span = grid[-1] - grid[0]
    if span <= 0:
        raise MetricError("integration grid has zero length")
    return float(np.sum(np.diff(grid) * (values[1:] + values[:-1]) / 2.0) / span)


def integrated_brier_score(curves: SurvivalCurve | Callable[[float], np.ndarray],
                           train_times, train_events, test_times, test_events,
                           min_risk_set: int = 20) -> float:
    """Brier score averaged over ``[0, T]`` by the trapezoid rule.

    ``curves`` gives each test subject's predicted survival, either as a
    :class:`SurvivalCurve` or a callable ``t -> S(t)`` per subject. The grid
    is the distinct test event times inside ``(0, T)`` plus 0 and ``T``.
    """
    survival_at = curves.at if isinstance(curves, SurvivalCurve) else curves
    T = ibs_horizon(train_times, train_events, test_times, min_risk_set)
    if T <= 0:
        raise MetricError("integration horizon must be positive")
    tt = np.asarray(test_times, dtype=float)
    td = np.asarray(test_events).astype(bool)
    g = censoring_km(tt, td)
    inner = np.unique(tt[td & (tt > 0) & (tt < T)])
    grid = np.r_[0.0, inner, T]
    bs = [brier_score(u, survival_at(u), tt, td, g) for u in grid]
    return trapezoid_average(grid, bs)


@dataclass(frozen=True)
class ROCCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray
    auc: float

    def to_csv_rows(self):
        yield ("fpr", "tpr")
        for f, t in zip(self.fpr, self.tpr):
            yield (repr(float(f)), repr(float(t)))


def roc_auc(scores, labels) -> tuple[ROCCurve, float]:
    """ROC curve over distinct score thresholds and trapezoid AUC.

    Tied scores move the curve diagonally, which makes the AUC equal to the
    Mann-Whitney probability with ties counted one half.
    """
    s = np.asarray(scores, dtype=float)
    y = np.asarray(labels).astype(int)
    n_pos, n_neg = int(y.sum()), int((1 - y).sum())
    if n_pos == 0 or n_neg == 0:
        raise MetricError("ROC needs both classes")
    thresholds = np.unique(s)[::-1]
    tp = np.array([np.sum(y[s >= c]) for c in thresholds])
    fp = np.array([np.sum(1 - y[s >= c]) for c in thresholds])
    tpr = np.r_[0.0, tp / n_pos]
    fpr = np.r_[0.0, fp / n_neg]
    auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
    return ROCCurve(fpr, tpr, thresholds, auc), auc


def log_rank_test(times_a, events_a, times_b, events_b) -> tuple[float, float]:
    """Two-group log-rank chi-square statistic (1 d.o.f.) and p-value."""
    ta, tb = np.asarray(times_a, dtype=float), np.asarray(times_b, dtype=float)
    da, db = np.asarray(events_a).astype(bool), np.asarray(events_b).astype(bool)
    if ta.size == 0 or tb.size == 0:
        raise MetricError("both groups need at least one subject")
    all_ev = np.unique(np.r_[ta[da], tb[db]])
    if all_ev.size == 0:
        raise MetricError("log-rank test needs at least one event")
    o_minus_e = 0.0
    var = 0.0
    for u in all_ev:
        n_a = np.sum(ta >= u)
        n_b = np.sum(tb >= u)
        d_a = np.sum((ta == u) & da)
        d_tot = d_a + np.sum((tb == u) & db)
        n = n_a + n_b
        o_minus_e += d_a - d_tot * n_a / n
        if n > 1:
            var += d_tot * (n_a / n) * (n_b / n) * (n - d_tot) / (n - 1)
    if var <= 0:
        return 0.0, 1.0
    stat = o_minus_e ** 2 / var
    return float(stat), float(stats.chi2.sf(stat, 1))


def wilcoxon_rank_sum(a, b) -> tuple[float, float]:
    """Mann-Whitney U of ``a`` and two-sided normal-approximation p-value.

    Mid-ranks for ties, tie-corrected variance and a 0.5 continuity correction.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n, m = a.size, b.size
    if n == 0 or m == 0:
        raise MetricError("both samples must be non-empty")
    pooled = np.r_[a, b]
    ranks = stats.rankdata(pooled)
    u = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    big_n = n + m
    _, counts = np.unique(pooled, return_counts=True)
    tie_term = np.sum(counts ** 3 - counts) / (big_n * (big_n - 1)) if big_n > 1 else 0.0
    var = n * m / 12.0 * ((big_n + 1) - tie_term)
    if var <= 0:
        return u, 1.0
    z = max(abs(u - n * m / 2.0) - 0.5, 0.0) / np.sqrt(var)
    return u, float(min(1.0, 2.0 * stats.norm.sf(z)))


def write_csv(rows, path, delimiter: str = ",") -> None:
    """RFC 4180 quoting, UTF-8, LF line endings."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
        for r in rows:
            w.writerow(r)
