"""Shared builders for the test suite."""

import datetime as dt

import numpy as np
import pytest

import vmemsec as v


def make_panel(x, tickers=None, split_index=-1):
    """Panel straight from a log-volatility matrix."""
    x = np.asarray(x, dtype=float)
    n = x.shape[1]
    tickers = tuple(tickers or (f"S{i}" for i in range(n)))
    dates = tuple(dt.date(2020, 1, 1) + dt.timedelta(days=i)
                  for i in range(x.shape[0]))
    return v.VolatilityPanel(tickers, dates, np.exp(x), split_index=split_index)


@pytest.fixture
def hand_case():
    """The 2-series, 3-row case with a spreadsheet-checked filter path."""
    x = np.array([[0.9, -0.1], [0.3, -0.7], [0.6, 0.1]])
    panel = make_panel(x, tickers=("AA", "BB"))
    spec = v.ModelSpec.for_tickers("vmem-sec", "diagonal", panel.tickers)
    params = v.ParamSet(
        alpha=np.array([0.1, 0.2]),
        beta=np.array([0.5, 0.4]),
        V=np.array([[0.08, 0.02], [0.02, 0.18]]),
        x_bar=np.array([0.5, -0.3]),
        theta=np.array([0.9, 1.1]),
        delta=0.1,
        phi=0.3,
        c=np.array([0.6, 0.8]),
    )
    expected_ln_mu = np.array([
        [0.54, -0.21],
        [0.616, -0.126],
        [0.5076, -0.318],
    ])
    expected_xi = np.array([0.0, 0.04, -0.032])
    expected_p = np.array([0.4, -0.44, 0.38])
    expected_loglik = -2.9612595894634324
    return panel, spec, params, expected_ln_mu, expected_xi, expected_p, expected_loglik


def sec_design(n=4):
    """Well-separated two-group spillover design used by the recovery tests."""
    tickers = [f"S{i}" for i in range(n)]
    half = n // 2
    ab_groups = {t: (1 if i < half else 2) for i, t in enumerate(tickers)}
    theta_groups = {t: (1 if i % 2 == 0 else 2) for i, t in enumerate(tickers)}
    spec = v.ModelSpec.for_tickers("vmem-sec", "clustered", tickers,
                                   ab_groups=ab_groups, theta_groups=theta_groups)
    alpha = np.where(np.arange(n) < half, 0.08, 0.16)
    beta = np.where(np.arange(n) < half, 0.85, 0.72)
    theta = np.where(np.arange(n) % 2 == 0, 0.88, 1.12)
    c = np.full(n, 1.0 / np.sqrt(n))
    V = 0.36 * (np.eye(n) * 0.75 + 0.25)
    params = v.ParamSet(
        alpha=alpha, beta=beta, V=V,
        x_bar=np.linspace(-0.2, 0.4, n),
        theta=theta, delta=0.075, phi=0.39, c=c,
    )
    truth = {"alpha_1": 0.08, "alpha_2": 0.16, "beta_1": 0.85, "beta_2": 0.72,
             "theta_1": 0.88, "delta": 0.075, "phi": 0.39}
    return spec, params, truth


def exact_factor(panel, c):
    """Factor whose scores use the given loadings with the panel's own mean."""
    c = np.asarray(c, dtype=float)
    return v.PcFactor(loadings=c, scores=(panel.x - panel.x_bar) @ c,
                      explained_share=0.5)
