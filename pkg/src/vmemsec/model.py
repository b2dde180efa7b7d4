"""Model specification, filter recursions, likelihood, and simulation.

Two model variants share one state layout.  The plain variant drives each
conditional log-mean with its own lagged observation and lagged mean.  The
spillover/co-movement variant adds a latent common component: an AR(1) driven
by the lagged first principal component of the log-volatilities, entering
each equation through a loading vector normalized to sum to n.

Innovations are jointly log-normal with covariance ``V``; the location
``m = -diag(V)/2`` pins every innovation mean at one.  Intercepts are
expectation-targeted so the recursions' fixed point is the training mean of
the log series plus half the innovation variances.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular

from .panel import VolatilityPanel

VMEM = "vmem"
VMEM_SEC = "vmem-sec"
PARAMETERIZATIONS = ("scalar", "diagonal", "clustered")

LOG_2PI = math.log(2.0 * math.pi)
_PD_PIVOT_TOL = 1e-12
_THETA_NORM_TOL = 1e-10


def _validate_groups(groups, what):
    ids = sorted(set(groups.values()))
    if not ids:
        raise ValueError(f"{what} is empty")
    if ids != list(range(1, len(ids) + 1)):
        raise ValueError(f"{what} ids must be contiguous from 1, got {ids}")
    return len(ids)


@dataclass(frozen=True)
class ModelSpec:
    """Variant x parameterization plus the group maps tying series together.

    ``ab_groups`` maps ticker to a group id in ``1..k1`` sharing one
    (alpha, beta) pair; ``theta_groups`` does the same for the loading vector
    (common-component variant only).  Scalar and diagonal parameterizations
    store the implied all-ones / identity maps explicitly.
    """

    variant: str
    parameterization: str
    ab_groups: dict
    theta_groups: dict = None

    def __post_init__(self):
        if self.variant not in (VMEM, VMEM_SEC):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.parameterization not in PARAMETERIZATIONS:
            raise ValueError(f"unknown parameterization {self.parameterization!r}")
        k1 = _validate_groups(self.ab_groups, "ab_groups")
        if self.parameterization == "scalar" and k1 != 1:
            raise ValueError("scalar parameterization requires a single ab group")
        if self.variant == VMEM:
            if self.theta_groups is not None:
                raise ValueError("theta_groups only apply to the vmem-sec variant")
        else:
            if self.theta_groups is None:
                raise ValueError("vmem-sec requires theta_groups")
            if set(self.theta_groups) != set(self.ab_groups):
                raise ValueError("theta_groups must map the same tickers as ab_groups")
            _validate_groups(self.theta_groups, "theta_groups")

    @classmethod
    def for_tickers(cls, variant, parameterization, tickers,
                    ab_groups=None, theta_groups=None):
        """Build a spec for a ticker list, deriving trivial maps when implied."""
        tickers = list(tickers)
        if parameterization == "scalar":
            ab_groups = {t: 1 for t in tickers}
            theta_groups = {t: 1 for t in tickers} if variant == VMEM_SEC else None
        elif parameterization == "diagonal":
            ab_groups = {t: i + 1 for i, t in enumerate(tickers)}
            theta_groups = (
                {t: i + 1 for i, t in enumerate(tickers)} if variant == VMEM_SEC else None
            )
        else:
            if ab_groups is None:
                raise ValueError("clustered parameterization requires ab_groups")
            ab_groups = dict(ab_groups)
            if variant == VMEM_SEC:
                if theta_groups is None:
                    raise ValueError("clustered vmem-sec requires theta_groups")
                theta_groups = dict(theta_groups)
            else:
                theta_groups = None
            missing = set(tickers) - set(ab_groups)
            if missing:
                raise ValueError(f"tickers without ab group: {sorted(missing)}")
        return cls(variant, parameterization, ab_groups, theta_groups)

    @property
    def is_sec(self):
        return self.variant == VMEM_SEC

    @property
    def k1(self):
        return len(set(self.ab_groups.values()))

    @property
    def k2(self):
        if self.theta_groups is None:
            return None
        return len(set(self.theta_groups.values()))

    @property
    def label(self):
        return f"{self.parameterization[0]}-{self.variant}"

    def tickers(self):
        return list(self.ab_groups)

    def ab_index(self, tickers):
        """0-based (alpha, beta) group index per ticker, in panel order."""
        return np.array([self.ab_groups[t] - 1 for t in tickers], dtype=np.int64)

    def theta_index(self, tickers):
        """0-based loading group index per ticker, in panel order."""
        return np.array([self.theta_groups[t] - 1 for t in tickers], dtype=np.int64)

    def to_dict(self):
        d = {
            "variant": self.variant,
            "parameterization": self.parameterization,
            "ab_groups": dict(self.ab_groups),
        }
        if self.theta_groups is not None:
            d["theta_groups"] = dict(self.theta_groups)
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            d["variant"],
            d["parameterization"],
            dict(d["ab_groups"]),
            dict(d["theta_groups"]) if d.get("theta_groups") else None,
        )


@dataclass(frozen=True)
class ParamSet:
    """Expanded coefficient vectors plus the concentrated quantities.

    ``alpha``/``beta`` (and ``theta`` for the common-component variant) are
    full length-n vectors, already expanded from their free group values.
    ``x_bar`` and ``c`` are frozen from the training window at fit time so
    out-of-sample filtering never touches future information.
    """

    alpha: np.ndarray
    beta: np.ndarray
    V: np.ndarray
    x_bar: np.ndarray
    theta: np.ndarray = None
    delta: float = None
    phi: float = None
    c: np.ndarray = None

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        beta = np.asarray(self.beta, dtype=float)
        V = np.asarray(self.V, dtype=float)
        x_bar = np.asarray(self.x_bar, dtype=float)
        n = alpha.shape[0]
        if beta.shape != (n,) or x_bar.shape != (n,) or V.shape != (n, n):
            raise ValueError("inconsistent parameter dimensions")
        if not np.allclose(V, V.T, atol=1e-12, rtol=0.0):
            raise ValueError("V must be symmetric")
        sec_fields = (self.theta, self.delta, self.phi, self.c)
        if any(f is not None for f in sec_fields) and any(f is None for f in sec_fields):
            raise ValueError("theta, delta, phi, c must all be set or all be absent")
        theta = c = None
        if self.theta is not None:
            theta = np.asarray(self.theta, dtype=float)
            c = np.asarray(self.c, dtype=float)
            if theta.shape != (n,) or c.shape != (n,):
                raise ValueError("inconsistent theta/c dimensions")
            if abs(theta.sum() - n) > _THETA_NORM_TOL * max(1.0, n):
                raise ValueError(
                    f"loading vector must sum to n={n}, got {theta.sum()!r}"
                )
        for arr in (alpha, beta, V, x_bar, theta, c):
            if arr is not None:
                arr.setflags(write=False)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "x_bar", x_bar)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "c", c)
        if self.delta is not None:
            object.__setattr__(self, "delta", float(self.delta))
            object.__setattr__(self, "phi", float(self.phi))

    @property
    def n_series(self):
        return self.alpha.shape[0]

    @property
    def is_sec(self):
        return self.theta is not None

    @property
    def m(self):
        """Innovation location, tied to V so every innovation has unit mean."""
        return -0.5 * np.diag(self.V)

    def replace(self, **kwargs):
        fields = {
            "alpha": self.alpha, "beta": self.beta, "V": self.V,
            "x_bar": self.x_bar, "theta": self.theta, "delta": self.delta,
            "phi": self.phi, "c": self.c,
        }
        fields.update(kwargs)
        return ParamSet(**fields)

    def to_dict(self):
        d = {
            "alpha": self.alpha.tolist(),
            "beta": self.beta.tolist(),
            "V": self.V.tolist(),
            "x_bar": self.x_bar.tolist(),
        }
        if self.is_sec:
            d.update(
                theta=self.theta.tolist(),
                delta=self.delta,
                phi=self.phi,
                c=self.c.tolist(),
            )
        return d

    @classmethod
    def from_dict(cls, d):
        return cls(
            alpha=np.asarray(d["alpha"], float),
            beta=np.asarray(d["beta"], float),
            V=np.asarray(d["V"], float),
            x_bar=np.asarray(d["x_bar"], float),
            theta=np.asarray(d["theta"], float) if "theta" in d else None,
            delta=d.get("delta"),
            phi=d.get("phi"),
            c=np.asarray(d["c"], float) if "c" in d else None,
        )


@dataclass
class FilterOutput:
    """Time paths produced by the filter; log-likelihood fills per_obs_loglik."""

    ln_mu: np.ndarray
    varsigma: np.ndarray
    xi: np.ndarray
    nu: np.ndarray
    p: np.ndarray
    per_obs_loglik: np.ndarray = None


def check_constraints(params, spec=None):
    """Return the list of stationarity/invertibility violations (empty if none).

    The common-component conditions (|delta+phi| < 1, |phi| < 1, and
    delta*c_i < 1 - alpha_i - beta_i) apply only to the spillover variant.
    """
    violations = []
    alpha, beta = params.alpha, params.beta
    ab = alpha + beta
    for i in np.flatnonzero(ab >= 1.0):
        violations.append(
            f"stationarity of idiosyncratic component {i}: "
            f"alpha+beta = {ab[i]!r} >= 1"
        )
    for i in np.flatnonzero(np.abs(beta) >= 1.0):
        violations.append(
            f"invertibility of idiosyncratic component {i}: |beta| = {abs(beta[i])!r} >= 1"
        )
    if params.is_sec:
        if abs(params.delta + params.phi) >= 1.0:
            violations.append(
                f"stationarity of common component: |delta+phi| = "
                f"{abs(params.delta + params.phi)!r} >= 1"
            )
        if abs(params.phi) >= 1.0:
            violations.append(
                f"invertibility of common component: |phi| = {abs(params.phi)!r} >= 1"
            )
        slack = 1.0 - ab
        dc = params.delta * params.c
        for i in np.flatnonzero(dc >= slack):
            violations.append(
                f"common-loading stationarity for component {i}: "
                f"delta*c = {dc[i]!r} >= 1-(alpha+beta) = {slack[i]!r}"
            )
    return violations


@njit(cache=True)
def _sec_recursion(x, p, alpha, beta, theta, delta, phi, x_bar, half_dv):
    T, n = x.shape
    ln_mu = np.empty((T, n))
    varsigma = np.empty((T, n))
    nu = np.empty((T, n))
    xi = np.empty(T)
    omega = (1.0 - alpha - beta) * x_bar + (1.0 - beta) * half_dv
    xi_prev = 0.0
    p_prev = 0.0
    nu_prev = x_bar.copy()
    sig_prev = x_bar + half_dv
    for t in range(T):
        xi_t = delta * p_prev + phi * xi_prev
        for i in range(n):
            s = omega[i] + alpha[i] * nu_prev[i] + beta[i] * sig_prev[i]
            varsigma[t, i] = s
            ln_mu[t, i] = s + theta[i] * xi_t
            nu[t, i] = x[t, i] - theta[i] * xi_t
        xi[t] = xi_t
        xi_prev = xi_t
        p_prev = p[t]
        nu_prev = nu[t]
        sig_prev = varsigma[t]
    return ln_mu, varsigma, xi, nu


@njit(cache=True)
def _vmem_recursion(x, alpha, beta, x_bar, half_dv):
    T, n = x.shape
    ln_mu = np.empty((T, n))
    omega = (1.0 - alpha - beta) * x_bar + (1.0 - beta) * half_dv
    x_prev = x_bar.copy()
    mu_prev = x_bar + half_dv
    for t in range(T):
        for i in range(n):
            ln_mu[t, i] = omega[i] + alpha[i] * x_prev[i] + beta[i] * mu_prev[i]
        x_prev = x[t]
        mu_prev = ln_mu[t]
    return ln_mu


@njit(cache=True)
def _sec_simulation(ln_eps, alpha, beta, theta, delta, phi, x_bar, half_dv, c):
    T, n = ln_eps.shape
    x = np.empty((T, n))
    ln_mu = np.empty((T, n))
    xi = np.empty(T)
    omega = (1.0 - alpha - beta) * x_bar + (1.0 - beta) * half_dv
    xi_prev = 0.0
    p_prev = 0.0
    nu_prev = x_bar.copy()
    sig_prev = x_bar + half_dv
    nu_t = np.empty(n)
    sig_t = np.empty(n)
    for t in range(T):
        xi_t = delta * p_prev + phi * xi_prev
        p_t = 0.0
        for i in range(n):
            s = omega[i] + alpha[i] * nu_prev[i] + beta[i] * sig_prev[i]
            sig_t[i] = s
            ln_mu[t, i] = s + theta[i] * xi_t
            x[t, i] = ln_mu[t, i] + ln_eps[t, i]
            nu_t[i] = x[t, i] - theta[i] * xi_t
            p_t += c[i] * (x[t, i] - x_bar[i])
        xi[t] = xi_t
        xi_prev = xi_t
        p_prev = p_t
        nu_prev = nu_t.copy()
        sig_prev = sig_t.copy()
    return x, ln_mu, xi


def _cholesky_factor(V):
    try:
        L = np.linalg.cholesky(V)
    except np.linalg.LinAlgError:
        raise ValueError("covariance not positive definite") from None
    if np.any(np.diag(L) ** 2 <= _PD_PIVOT_TOL):
        raise ValueError("covariance not positive definite")
    return L


def filter_paths(panel, spec, params):
    """Run the one-step filter over every row of the panel.

    The common-component score path is recomputed internally as
    ``c'(x_t - x_bar)`` from the loadings and mean frozen in ``params``, so
    filtering a simulated panel at its true parameters reproduces the
    simulation state exactly.

    Raises
    ------
    ValueError
        If the parameter set violates the stationarity/invertibility
        constraints, or dimensions disagree with the panel.
    """
    if params.n_series != panel.n_series:
        raise ValueError(
            f"params are for {params.n_series} series, panel has {panel.n_series}"
        )
    violations = check_constraints(params, spec)
    if violations:
        raise ValueError("constraint violations: " + "; ".join(violations))
    x = panel.x
    half_dv = 0.5 * np.diag(params.V)
    if spec.is_sec:
        if not params.is_sec:
            raise ValueError("vmem-sec spec requires theta/delta/phi/c in params")
        p = (x - params.x_bar) @ params.c
        ln_mu, varsigma, xi, nu = _sec_recursion(
            x, p, params.alpha, params.beta, params.theta,
            params.delta, params.phi, params.x_bar, half_dv,
        )
    else:
        ln_mu = _vmem_recursion(x, params.alpha, params.beta, params.x_bar, half_dv)
        varsigma = ln_mu.copy()
        xi = np.zeros(x.shape[0])
        p = np.zeros(x.shape[0])
        nu = x.copy()
    return FilterOutput(ln_mu=ln_mu, varsigma=varsigma, xi=xi, nu=nu, p=p)


def log_likelihood(panel, filter_out, params):
    """Joint log-normal log-likelihood of the panel given filtered means.

    Also fills ``filter_out.per_obs_loglik`` with the per-row contributions,
    which sum to the returned total.
    """
    L = _cholesky_factor(params.V)
    log_det = 2.0 * np.log(np.diag(L)).sum()
    n = panel.n_series
    e = panel.x - filter_out.ln_mu - params.m
    z = solve_triangular(L, e.T, lower=True, check_finite=False)
    quad = np.einsum("ij,ij->j", z, z)
    per_obs = -0.5 * n * LOG_2PI - 0.5 * log_det - panel.x.sum(axis=1) - 0.5 * quad
    filter_out.per_obs_loglik = per_obs
    return float(per_obs.sum())


def targeting_intercept(alpha, beta, x_bar, V):
    """Expectation-targeted intercept (1-A-B) x_bar + (I-B) diag(V)/2."""
    alpha = np.asarray(alpha, float)
    beta = np.asarray(beta, float)
    x_bar = np.asarray(x_bar, float)
    return (1.0 - alpha - beta) * x_bar + (1.0 - beta) * 0.5 * np.diag(np.asarray(V, float))


@dataclass(frozen=True)
class PerEquationCoefficients:
    """Equation-by-equation decomposition of the conditional log-mean.

    ``spillover[i, j]`` is the coefficient of series j's lagged demeaned
    log-volatility in equation i (zero on the diagonal; the own-lag effect,
    including the own share of the common factor, sits in ``own_lag``).
    """

    tickers: tuple
    own_lag: np.ndarray
    inertia: np.ndarray
    spillover: np.ndarray
    common_factor: np.ndarray


def per_equation_coefficients(spec, params):
    """Coefficients of each equation's lagged regressors (vmem-sec only).

    own-lag: alpha_i + theta_i * delta * c_i; inertia: beta_i;
    cross spillovers: theta_i * delta * c_j; lagged common factor:
    (phi - alpha_i - beta_i) * theta_i.
    """
    if not spec.is_sec:
        raise ValueError("per-equation decomposition requires the vmem-sec variant")
    a, b, th, c = params.alpha, params.beta, params.theta, params.c
    d, f = params.delta, params.phi
    spill = np.outer(th * d, c)
    np.fill_diagonal(spill, 0.0)
    return PerEquationCoefficients(
        tickers=tuple(spec.tickers()),
        own_lag=a + th * d * c,
        inertia=b.copy(),
        spillover=spill,
        common_factor=(f - a - b) * th,
    )


def simulate(spec, params, n_periods, seed, tickers=None, start_date=None):
    """Draw a synthetic volatility panel from the model.

    Innovations are exact joint log-normal draws; the score path feeding the
    common component is computed from the simulated log-volatilities
    themselves at each step.  The returned panel is fully in-sample and
    recomputes its own sample statistics from the draw.
    """
    violations = check_constraints(params, spec)
    if violations:
        raise ValueError("constraint violations: " + "; ".join(violations))
    n = params.n_series
    if n_periods < 2:
        raise ValueError("need at least 2 periods")
    rng = np.random.default_rng(seed)
    L = _cholesky_factor(params.V)
    ln_eps = params.m + rng.standard_normal((n_periods, n)) @ L.T
    half_dv = 0.5 * np.diag(params.V)
    if spec.is_sec:
        x, _, _ = _sec_simulation(
            ln_eps, params.alpha, params.beta, params.theta,
            params.delta, params.phi, params.x_bar, half_dv, params.c,
        )
    else:
        x, _, _ = _sec_simulation(
            ln_eps, params.alpha, params.beta, np.zeros(n),
            0.0, 0.0, params.x_bar, half_dv, np.zeros(n),
        )
    if tickers is None:
        tickers = spec.tickers()
        if len(tickers) != n:
            tickers = [f"S{i + 1:02d}" for i in range(n)]
    if start_date is None:
        start_date = dt.date(2000, 1, 3)
    dates = [start_date + dt.timedelta(days=i) for i in range(n_periods)]
    return VolatilityPanel(tuple(tickers), tuple(dates), np.exp(x))


def count_parameters(variant, parameterization, n, k1=None, k2=None):
    """Number of free coefficients for a variant/parameterization pair.

    ``parameterization="full"`` (common-component variant only) counts the
    fully parameterized system including the covariance matrix:
    n(n+7)/2 + 1.  The diagonal spillover variant is counted with all n
    loadings (3n + 2); net of the sum-to-n normalization the optimizer
    actually searches one dimension less, as noted in the README.
    """
    if variant not in (VMEM, VMEM_SEC):
        raise ValueError(f"unknown variant {variant!r}")
    if parameterization == "full":
        if variant != VMEM_SEC:
            raise ValueError("full count is defined for the vmem-sec variant only")
        return n * (n + 7) // 2 + 1
    if parameterization == "scalar":
        return 4 if variant == VMEM_SEC else 2
    if parameterization == "diagonal":
        return 3 * n + 2 if variant == VMEM_SEC else 2 * n
    if parameterization == "clustered":
        if k1 is None:
            raise ValueError("clustered count requires k1")
        if variant == VMEM_SEC:
            if k2 is None:
                raise ValueError("clustered vmem-sec count requires k2")
            return 2 * (k1 + 1) + (k2 - 1)
        return 2 * k1
    raise ValueError(f"unknown parameterization {parameterization!r}")


def count_parameters_for(spec, n):
    """Parameter count for a bound ModelSpec."""
    return count_parameters(spec.variant, spec.parameterization, n,
                            k1=spec.k1, k2=spec.k2)


def save_filter_csv(filter_out, panel, path):
    """Export filtered paths as long CSV: date, ticker, ln_mu, varsigma, xi."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "ticker", "ln_mu", "varsigma", "xi"])
        for t, d in enumerate(panel.dates):
            for i, tic in enumerate(panel.tickers):
                writer.writerow([
                    d.isoformat(), tic,
                    repr(float(filter_out.ln_mu[t, i])),
                    repr(float(filter_out.varsigma[t, i])),
                    repr(float(filter_out.xi[t])),
                ])
