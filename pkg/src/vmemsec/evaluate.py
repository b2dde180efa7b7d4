"""Forecast evaluation: one-step forecasts, losses, criteria, and the MCS.

Point forecasts are the filtered conditional means, which already condition
only on information through the previous observation; the innovation has unit
mean, so no bias correction is needed.  Model comparison uses the
semi-quadratic statistic over pairwise mean loss differentials with a
circular block bootstrap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .panel import _canonical_window
from .model import filter_paths


@dataclass(frozen=True)
class LossSeries:
    """Per-observation losses for one model over one evaluation window."""

    model_id: str
    per_obs: np.ndarray
    window: str
    aggregate: float = None

    def __post_init__(self):
        per_obs = np.asarray(self.per_obs, dtype=float)
        per_obs.setflags(write=False)
        object.__setattr__(self, "per_obs", per_obs)
        object.__setattr__(self, "window", _canonical_window(self.window))
        object.__setattr__(self, "aggregate", float(per_obs.mean()))


@dataclass(frozen=True)
class McsResult:
    """Outcome of the model confidence set elimination procedure."""

    included: tuple
    pvalues: dict
    elimination_order: tuple
    alpha: float
    n_bootstrap: int
    block_length: int


def forecast_one_step(panel, spec, params, window):
    """One-step-ahead conditional mean forecasts over a named window.

    Every row is predicted from information through the previous row via the
    filter recursion, using loadings and means frozen in ``params`` at fit
    time; over the training window the forecasts coincide with the filtered
    means by construction.

    Returns
    -------
    ndarray
        Forecast matrix of shape (window length, n_series).
    """
    rows = panel.window_rows(window)
    filt = filter_paths(panel, spec, params)
    return np.exp(filt.ln_mu[rows])


def loss_mse(y, mu, model_id="model", window="is"):
    """Squared-error losses (y - mu)^2 with the grand mean as aggregate."""
    y = np.asarray(y, float)
    mu = np.asarray(mu, float)
    if y.shape != mu.shape:
        raise ValueError(f"shape mismatch: y {y.shape} vs mu {mu.shape}")
    return LossSeries(model_id=model_id, per_obs=(y - mu) ** 2, window=window)


def loss_qlike(y, mu, model_id="model", window="is"):
    """Robust volatility losses ln(mu) + y/mu, minimized at mu = y."""
    y = np.asarray(y, float)
    mu = np.asarray(mu, float)
    if y.shape != mu.shape:
        raise ValueError(f"shape mismatch: y {y.shape} vs mu {mu.shape}")
    if np.any(mu <= 0.0):
        raise ValueError("qlike needs strictly positive forecasts")
    return LossSeries(model_id=model_id, per_obs=np.log(mu) + y / mu, window=window)


def information_criteria(loglik, n_free, n_obs):
    """Per-observation information criteria.

    AIC = (-2 loglik + 2 k) / T and BIC = (-2 loglik + k ln T) / T; the
    division by the number of rows (not rows x series) makes values
    comparable across panels of different length.
    """
    if n_obs <= 0:
        raise ValueError("n_obs must be positive")
    aic = (-2.0 * loglik + 2.0 * n_free) / n_obs
    bic = (-2.0 * loglik + n_free * math.log(n_obs)) / n_obs
    return aic, bic


def _block_bootstrap_indices(rng, n_draws, n_obs, block_length):
    """Circular block bootstrap index matrix of shape (n_draws, n_obs)."""
    block_length = max(1, min(int(block_length), n_obs))
    n_blocks = -(-n_obs // block_length)
    starts = rng.integers(0, n_obs, size=(n_draws, n_blocks))
    offsets = np.arange(block_length)
    idx = (starts[:, :, None] + offsets[None, None, :]) % n_obs
    return idx.reshape(n_draws, -1)[:, :n_obs]


def model_confidence_set(losses, alpha=0.05, n_bootstrap=1000, block_length=20,
                         seed=0):
    """Iteratively eliminate inferior models at the given significance level.

    Loss panels are averaged across series per period before testing.  At
    each step the semi-quadratic statistic (sum of squared standardized
    pairwise mean loss differentials) is compared with its circular block
    bootstrap distribution; while equal predictive ability is rejected, the
    model with the largest standardized average differential is dropped.
    Reported p-values follow the usual monotonized convention, and at least
    one model always survives.

    Parameters
    ----------
    losses : list of LossSeries
        At least two, with aligned windows.

    Returns
    -------
    McsResult
    """
    if len(losses) < 2:
        raise ValueError("need at least 2 models to compare")
    ids = [ls.model_id for ls in losses]
    if len(set(ids)) != len(ids):
        raise ValueError("model ids must be unique")
    series = []
    for ls in losses:
        per = ls.per_obs
        series.append(per.mean(axis=1) if per.ndim == 2 else per.astype(float))
    n_obs = series[0].shape[0]
    if any(s.shape[0] != n_obs for s in series):
        raise ValueError("loss series must share the same length")
    L = np.column_stack(series)

    rng = np.random.default_rng(seed)
    idx = _block_bootstrap_indices(rng, n_bootstrap, n_obs, block_length)
    # bootstrap means are linear in the per-model means, so one gather per
    # model serves every pairwise differential
    boot_means = L[idx].mean(axis=1)
    full_means = L.mean(axis=0)

    current = list(range(len(ids)))
    pvalues = {}
    eliminated = []
    p_floor = 0.0
    var_eps = 1e-30
    while True:
        m = len(current)
        if m == 1:
            pvalues[ids[current[0]]] = 1.0
            break
        mu = full_means[current]
        bm = boot_means[:, current]
        d = mu[:, None] - mu[None, :]
        bd = bm[:, :, None] - bm[:, None, :]
        dev = bd - d[None, :, :]
        var = (dev ** 2).mean(axis=0) + var_eps
        iu = np.triu_indices(m, k=1)
        t_sq = float((d[iu] ** 2 / var[iu]).sum())
        boot_sq = (dev[:, iu[0], iu[1]] ** 2 / var[iu]).sum(axis=1)
        p_step = float((boot_sq >= t_sq).mean())
        p_mcs = max(p_floor, p_step)
        if p_step >= alpha:
            for k in current:
                pvalues[ids[k]] = p_mcs
            break
        # drop the model with the worst standardized average differential
        avg = d.mean(axis=1) * m / (m - 1)
        boot_avg = dev.mean(axis=2) * m / (m - 1)
        avg_var = (boot_avg ** 2).mean(axis=0) + var_eps
        worst = int(np.argmax(avg / np.sqrt(avg_var)))
        worst_id = ids[current[worst]]
        pvalues[worst_id] = p_mcs
        eliminated.append((worst_id, p_mcs))
        p_floor = p_mcs
        current.pop(worst)

    included = tuple(ids[k] for k in current)
    return McsResult(
        included=included,
        pvalues=pvalues,
        elimination_order=tuple(eliminated),
        alpha=alpha,
        n_bootstrap=n_bootstrap,
        block_length=block_length,
    )
