"""Synthetic cohorts with a known latent log-hazard, for desk-scale checks."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..data_model import ClinicalTable, CohortDataset, ExpressionMatrix, Scale

BASE_MEDIAN_DAYS = 1000.0


@dataclass(frozen=True)
class SyntheticTruth:
    latent: np.ndarray          # n x k
    beta: np.ndarray            # k
    log_hazard: np.ndarray      # n, equals signal_strength * latent @ beta
    mixing: np.ndarray          # n_genes x k
    censor_horizon: float | None


def softplus(x):
    return np.logaddexp(0.0, x)


def synthetic_cohort(n_samples: int, n_genes: int, latent_dim: int, signal_strength: float,
                     censor_rate: float, seed: int, noise: float = 1.0,
                     cancer_type: str = "SYN", id_prefix: str = "S",
                     mixing: np.ndarray | None = None, beta: np.ndarray | None = None,
                     ) -> tuple[CohortDataset, SyntheticTruth]:
    """Draw a cohort whose expression is a noisy nonlinear image of a latent state.

    ``z ~ N(0, I_k)``; expression ``log2(1 + softplus(A z + noise))`` with a
    seeded mixing matrix ``A``; event times exponential with rate proportional
    to ``exp(signal_strength * beta . z)`` (``|beta| = 1``); censoring times
    uniform on ``[0, h]`` with ``h`` solved so the realised censored fraction
    is as close to ``censor_rate`` as the sample allows.

    Passing ``mixing``/``beta`` reuses another cohort's latent geometry.
    """
    if latent_dim > n_genes or latent_dim < 1:
        raise ValueError("latent_dim must lie in 1..n_genes")
    if not 0 <= censor_rate < 1:
        raise ValueError(f"infeasible censor_rate {censor_rate}")
    rng = np.random.default_rng(seed)
    geo = np.random.default_rng([seed, 1])
    if mixing is None:
        mixing = geo.normal(size=(n_genes, latent_dim)) * 2.0 / np.sqrt(latent_dim)
    if beta is None:
        beta = geo.normal(size=latent_dim)
        beta /= np.linalg.norm(beta)
    z = rng.standard_normal((n_samples, latent_dim))
    raw = softplus(z @ mixing.T + noise * rng.standard_normal((n_samples, n_genes)))
    expr = np.log2(1.0 + raw)
    eta = signal_strength * z @ beta
    rate = np.log(2.0) / BASE_MEDIAN_DAYS * np.exp(eta)
    t_event = rng.exponential(1.0 / rate)
    u = rng.uniform(size=n_samples)
    horizon = None
    if censor_rate == 0:
        times, events = t_event, np.ones(n_samples, dtype=int)
    else:
        horizon = _solve_horizon(t_event, u, censor_rate)
        c = u * horizon
        events = (t_event <= c).astype(int)
        times = np.minimum(t_event, c)
        if abs(1 - events.mean() - censor_rate) > 0.1:
            raise ValueError(f"could not reach censor_rate {censor_rate}")
    ids = [f"{id_prefix}{i:04d}" for i in range(n_samples)]
    genes = [f"G{j:04d}" for j in range(n_genes)]
    ds = CohortDataset(ExpressionMatrix(ids, genes, expr, Scale.LOG2),
                       ClinicalTable(ids, times, events), cancer_type)
    return ds, SyntheticTruth(z, beta, eta, mixing, horizon)


def _solve_horizon(t_event, u, target):
    # censored fraction is non-increasing in the horizon
    def frac(h):
        return float(np.mean(u * h < t_event))

    lo, hi = 1e-9, float(t_event.max() / max(u.min(), 1e-12)) * 2
    for _ in range(200):
        mid = np.sqrt(lo * hi)
        if frac(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi if abs(frac(hi) - target) <= abs(frac(lo) - target) else lo
