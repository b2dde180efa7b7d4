"""Shared synthetic design for the demo scripts."""

import numpy as np

import vmemsec as v


def two_group_design(n=4):
    """Clustered spillover model with two dynamics groups and two loadings."""
    tickers = [f"S{i}" for i in range(n)]
    half = n // 2
    spec = v.ModelSpec.for_tickers(
        "vmem-sec", "clustered", tickers,
        ab_groups={t: (1 if i < half else 2) for i, t in enumerate(tickers)},
        theta_groups={t: (1 if i % 2 == 0 else 2) for i, t in enumerate(tickers)},
    )
    params = v.ParamSet(
        alpha=np.where(np.arange(n) < half, 0.08, 0.16),
        beta=np.where(np.arange(n) < half, 0.85, 0.72),
        V=0.36 * (np.eye(n) * 0.75 + 0.25),
        x_bar=np.linspace(-0.2, 0.4, n),
        theta=np.where(np.arange(n) % 2 == 0, 0.88, 1.12),
        delta=0.075, phi=0.39,
        c=np.full(n, 1.0 / np.sqrt(n)),
    )
    return spec, params


def simulated_sec_panel(n=4, n_periods=2500, seed=42, split=None):
    spec, params = two_group_design(n)
    panel = v.simulate(spec, params, n_periods, seed=seed)
    if split is not None:
        panel = v.VolatilityPanel(panel.tickers, panel.dates, panel.y,
                                  split_index=split)
    return spec, params, panel
