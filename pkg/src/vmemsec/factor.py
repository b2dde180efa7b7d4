"""Principal-component common factor of a log-volatility panel.

The observable driver of the common component is the first principal
component of the demeaned log-volatilities, estimated on the training window
and applied to every row with the frozen loadings and training mean.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_EIGEN_GAP_TOL = 1e-10


@dataclass(frozen=True)
class PcFactor:
    """Leading principal component: unit-norm loadings, scores, variance share."""

    loadings: np.ndarray
    scores: np.ndarray
    explained_share: float

    def __post_init__(self):
        c = np.asarray(self.loadings, dtype=float)
        p = np.asarray(self.scores, dtype=float)
        c.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "loadings", c)
        object.__setattr__(self, "scores", p)


def first_principal_component(panel):
    """Extract the leading principal component of the training-window covariance.

    The eigenvector sign is fixed so its coordinate sum is positive (first
    nonzero coordinate positive on an exact tie), making results deterministic
    across platforms.  Scores are computed for all rows, including any
    out-of-sample window, using the training loadings and training mean.

    Parameters
    ----------
    panel : VolatilityPanel
        Training window must satisfy ``n_train > n_series >= 2``.

    Returns
    -------
    PcFactor

    Raises
    ------
    ValueError
        If the two largest eigenvalues coincide (no well-defined leading
        component) or the panel is too small.
    """
    n = panel.n_series
    if n < 2:
        raise ValueError("need at least 2 series for a principal component")
    if panel.n_train <= n:
        raise ValueError(
            f"training window length {panel.n_train} must exceed n_series {n}"
        )
    x_train = panel.x[: panel.split_index]
    cov = np.cov(x_train, rowvar=False, ddof=1)
    eigvals, eigvecs = np.linalg.eigh(cov)
    lam1, lam2 = eigvals[-1], eigvals[-2]
    if lam1 - lam2 <= _EIGEN_GAP_TOL * max(lam1, _EIGEN_GAP_TOL):
        raise ValueError("ambiguous leading component: top eigenvalue is not simple")
    c = eigvecs[:, -1]
    s = c.sum()
    if s < 0.0:
        c = -c
    elif s == 0.0:
        nz = np.flatnonzero(c)
        if nz.size and c[nz[0]] < 0.0:
            c = -c
    scores = (panel.x - panel.x_bar) @ c
    share = float(min(max(lam1 / eigvals.sum(), 0.0), 1.0))
    return PcFactor(loadings=c, scores=scores, explained_share=share)
