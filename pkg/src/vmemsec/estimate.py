"""Maximum-likelihood estimation with covariance concentration.

The innovation covariance is never optimized directly: each outer iteration
holds it fixed while a quasi-Newton search maximizes the likelihood over the
dynamic coefficients in an unconstrained transformed space, then re-estimates
the covariance from the log-residuals.  Iterations stop when the maximized
log-likelihood moves by less than the outer tolerance.

Constraint handling: beta = tanh(b), alpha = logistic(a) * (1 - beta),
phi = tanh(p), and delta mapped into (-1-phi, 1-phi) by a logistic, which
jointly guarantee the stationarity and invertibility region; the remaining
loading-feasibility condition is kept by a soft penalty during the search
and a strict check on the final estimate.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.linalg import solve_triangular
from scipy.optimize import minimize
from scipy.special import expit

from . import model as _m
from .model import (
    LOG_2PI,
    ModelSpec,
    ParamSet,
    _sec_recursion,
    _vmem_recursion,
    count_parameters_for,
)

_TANH_CAP = 1.0 - 1e-10
# soft weight on loading-feasibility violations: steers the search back into
# the constraint region without the line-search-breaking cliff of a hard
# rejection; exactly zero at any interior optimum
_PENALTY_WEIGHT = 1e5


class EstimationError(RuntimeError):
    """Raised when an estimation step cannot produce a usable result."""


@dataclass(frozen=True)
class FitOptions:
    """Settings for the outer concentration loop and the inner optimizer."""

    outer_tolerance: float = 1e-4
    max_outer_iterations: int = 50
    inner_max_iterations: int = 500
    inner_gradient_tolerance: float = 1e-6
    n_starts: int = 3
    seed: int = 0
    compute_std_errors: bool = True

    def __post_init__(self):
        if self.outer_tolerance <= 0.0:
            raise ValueError("outer_tolerance must be positive")
        if self.max_outer_iterations < 1:
            raise ValueError("max_outer_iterations must be >= 1")
        if self.n_starts < 1:
            raise ValueError("n_starts must be >= 1")


@dataclass
class FitResult:
    """Converged parameters with the optimization trace and robust SEs."""

    params: ParamSet
    spec: ModelSpec
    loglik: float
    loglik_trace: np.ndarray
    std_errors: np.ndarray
    free_names: list
    n_free: int
    converged: bool
    wall_time: float = 0.0

    def to_dict(self):
        return {
            "spec": self.spec.to_dict(),
            "params": self.params.to_dict(),
            "loglik": self.loglik,
            "loglik_trace": np.asarray(self.loglik_trace).tolist(),
            "std_errors": None if self.std_errors is None
            else np.asarray(self.std_errors).tolist(),
            "free_names": list(self.free_names),
            "n_free": self.n_free,
            "converged": self.converged,
            "wall_time": self.wall_time,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            params=ParamSet.from_dict(d["params"]),
            spec=ModelSpec.from_dict(d["spec"]),
            loglik=d["loglik"],
            loglik_trace=np.asarray(d["loglik_trace"], float),
            std_errors=None if d.get("std_errors") is None
            else np.asarray(d["std_errors"], float),
            free_names=list(d["free_names"]),
            n_free=d["n_free"],
            converged=d["converged"],
            wall_time=d.get("wall_time", 0.0),
        )


@dataclass(frozen=True)
class _Layout:
    """Ordering of the free parameter vector for one bound model spec.

    Layout: alpha group values, beta group values, then for the
    common-component variant the first k2-1 loading group values followed by
    delta and phi.  The last loading group is pinned by the sum-to-n
    normalization.
    """

    is_sec: bool
    n: int
    k1: int
    k2: int
    ab_index: np.ndarray
    theta_index: np.ndarray
    theta_counts: np.ndarray

    @classmethod
    def from_spec(cls, spec, tickers):
        ab_index = spec.ab_index(tickers)
        if spec.is_sec:
            theta_index = spec.theta_index(tickers)
            counts = np.bincount(theta_index, minlength=spec.k2)
            return cls(True, len(tickers), spec.k1, spec.k2, ab_index,
                       theta_index, counts)
        return cls(False, len(tickers), spec.k1, 0, ab_index, None, None)

    @property
    def size(self):
        base = 2 * self.k1
        return base + (self.k2 - 1) + 2 if self.is_sec else base

    @property
    def names(self):
        out = [f"alpha_{g + 1}" for g in range(self.k1)]
        out += [f"beta_{g + 1}" for g in range(self.k1)]
        if self.is_sec:
            out += [f"theta_{g + 1}" for g in range(self.k2 - 1)]
            out += ["delta", "phi"]
        return out

    def theta_full(self, theta_free):
        """Expand free loading group values; last group set by the sum-to-n rule."""
        values = np.empty(self.k2)
        values[: self.k2 - 1] = theta_free
        head = float(np.dot(values[: self.k2 - 1], self.theta_counts[: self.k2 - 1]))
        values[self.k2 - 1] = (self.n - head) / self.theta_counts[self.k2 - 1]
        return values[self.theta_index]

    def expand(self, free):
        """Natural free vector -> expanded (alpha, beta, theta, delta, phi)."""
        k1 = self.k1
        alpha = free[:k1][self.ab_index]
        beta = free[k1: 2 * k1][self.ab_index]
        if not self.is_sec:
            return alpha, beta, None, None, None
        theta = self.theta_full(free[2 * k1: 2 * k1 + self.k2 - 1])
        delta, phi = free[-2], free[-1]
        return alpha, beta, theta, float(delta), float(phi)

    def pack(self, params):
        """Extract the natural free vector from an expanded ParamSet."""
        free = []
        for g in range(self.k1):
            free.append(params.alpha[np.argmax(self.ab_index == g)])
        for g in range(self.k1):
            free.append(params.beta[np.argmax(self.ab_index == g)])
        if self.is_sec:
            for g in range(self.k2 - 1):
                free.append(params.theta[np.argmax(self.theta_index == g)])
            free += [params.delta, params.phi]
        return np.asarray(free, dtype=float)

    def natural_from_z(self, z):
        """Transformed optimizer vector -> natural free vector."""
        k1 = self.k1
        out = np.empty_like(z)
        beta = np.clip(np.tanh(z[k1: 2 * k1]), -_TANH_CAP, _TANH_CAP)
        out[:k1] = expit(z[:k1]) * (1.0 - beta)
        out[k1: 2 * k1] = beta
        if self.is_sec:
            out[2 * k1: 2 * k1 + self.k2 - 1] = z[2 * k1: 2 * k1 + self.k2 - 1]
            phi = np.clip(np.tanh(z[-1]), -_TANH_CAP, _TANH_CAP)
            delta = (2.0 * np.clip(expit(z[-2]), 1e-12, 1 - 1e-12) - 1.0) - phi
            out[-2], out[-1] = delta, phi
        return out

    def z_from_natural(self, free):
        """Natural free vector -> transformed optimizer vector."""
        k1 = self.k1
        z = np.empty_like(free)
        beta = free[k1: 2 * k1]
        z[k1: 2 * k1] = np.arctanh(beta)
        ratio = np.clip(free[:k1] / (1.0 - beta), 1e-12, 1 - 1e-12)
        z[:k1] = np.log(ratio / (1.0 - ratio))
        if self.is_sec:
            z[2 * k1: 2 * k1 + self.k2 - 1] = free[2 * k1: 2 * k1 + self.k2 - 1]
            delta, phi = free[-2], free[-1]
            u = np.clip((delta + phi + 1.0) / 2.0, 1e-12, 1 - 1e-12)
            z[-2] = np.log(u / (1.0 - u))
            z[-1] = np.arctanh(phi)
        return z


def _default_start(layout):
    free = np.empty(layout.size)
    free[: layout.k1] = 0.05
    free[layout.k1: 2 * layout.k1] = 0.90
    if layout.is_sec:
        free[2 * layout.k1: 2 * layout.k1 + layout.k2 - 1] = 1.0
        free[-2] = 0.05
        free[-1] = 0.3
    return free


def _make_objective(x, p_scores, x_bar, c, layout, V):
    """Negative log-likelihood over the transformed free vector, V fixed."""
    L = _m._cholesky_factor(V)
    half_dv = 0.5 * np.diag(V)
    log_det = 2.0 * np.log(np.diag(L)).sum()
    T, n = x.shape
    const = T * (-0.5 * n * LOG_2PI - 0.5 * log_det) - x.sum()

    def neg_ll(z):
        free = layout.natural_from_z(z)
        alpha, beta, theta, delta, phi = layout.expand(free)
        penalty = 0.0
        if layout.is_sec:
            excess = np.maximum(0.0, delta * c - (1.0 - alpha - beta) + 1e-8)
            penalty = _PENALTY_WEIGHT * float(excess @ excess)
            ln_mu, _, _, _ = _sec_recursion(
                x, p_scores, alpha, beta, theta, delta, phi, x_bar, half_dv
            )
        else:
            ln_mu = _vmem_recursion(x, alpha, beta, x_bar, half_dv)
        e = x - ln_mu + half_dv
        zres = solve_triangular(L, e.T, lower=True, check_finite=False)
        return -(const - 0.5 * float(np.einsum("ij,ij->", zres, zres))) + penalty

    return neg_ll


def _inner_maximize(neg_ll, z0, options):
    res = minimize(
        neg_ll, z0, method="L-BFGS-B",
        options={
            "maxiter": options.inner_max_iterations,
            "ftol": 1e-12,
            "gtol": options.inner_gradient_tolerance,
        },
    )
    f0 = neg_ll(z0)
    if not np.isfinite(res.fun) or res.fun > f0:
        return z0, f0, "inner optimizer made no progress"
    return res.x, float(res.fun), None


def fit(panel, factor, spec, options=None):
    """Fit a model by iterative covariance concentration.

    Each cycle (a) fixes the innovation covariance, (b) maximizes the
    log-likelihood over the free dynamic coefficients starting from the
    previous optimum, (c) recomputes log-residuals, and (d) refreshes the
    covariance from their sample covariance, until the maximized
    log-likelihood changes by less than ``options.outer_tolerance``.

    Parameters
    ----------
    panel : VolatilityPanel
        Estimation uses the training window only.
    factor : PcFactor or None
        Supplies the loadings for the common component; ignored (may be
        None) for the plain variant.
    spec : ModelSpec
    options : FitOptions, optional

    Returns
    -------
    FitResult
        ``converged`` is False when the iteration budget ran out; the
        best-so-far parameters are still returned.
    """
    t_start = time.perf_counter()
    options = options or FitOptions()
    train = panel.training_view()
    x = train.x
    T, n = x.shape
    layout = _Layout.from_spec(spec, train.tickers)
    n_free = count_parameters_for(spec, n)
    if T <= 10 * n_free:
        raise ValueError(
            f"training window ({T} rows) must exceed 10x the free parameter "
            f"count ({n_free})"
        )
    if spec.is_sec:
        if factor is None:
            raise ValueError("vmem-sec requires a principal-component factor")
        c = np.asarray(factor.loadings, float)
        p_scores = (x - train.x_bar) @ c
    else:
        c = None
        p_scores = None

    V = np.atleast_2d(np.cov(x, rowvar=False, bias=True))
    rng = np.random.default_rng(options.seed)
    z0 = layout.z_from_natural(_default_start(layout))

    trace = []
    converged = False
    z_hat = None
    for outer in range(options.max_outer_iterations):
        neg_ll = _make_objective(x, p_scores, train.x_bar, c, layout, V)
        if outer == 0:
            best = None
            failures = []
            for s in range(options.n_starts):
                z_start = z0.copy()
                if s > 0:
                    for _ in range(20):  # resample until the start is usable
                        z_start = z0 + rng.normal(scale=0.3, size=z0.shape)
                        if np.isfinite(neg_ll(z_start)):
                            break
                z_opt, f_opt, err = _inner_maximize(neg_ll, z_start, options)
                if not np.isfinite(f_opt):
                    failures.append(err or "non-finite objective")
                    continue
                if best is None or f_opt < best[1]:
                    best = (z_opt, f_opt)
            if best is None:
                raise EstimationError(
                    "all multistarts failed: " + "; ".join(failures)
                )
            z_hat, f_hat = best
        else:
            z_hat, f_hat, _ = _inner_maximize(neg_ll, z_hat, options)
        trace.append(-f_hat)
        if outer > 0 and abs(trace[-1] - trace[-2]) < options.outer_tolerance:
            converged = True
            break
        if outer == options.max_outer_iterations - 1:
            break
        # steps c-d: log-residuals at the current optimum, then refresh V
        alpha, beta, theta, delta, phi = layout.expand(layout.natural_from_z(z_hat))
        half_dv = 0.5 * np.diag(V)
        if spec.is_sec:
            ln_mu, _, _, _ = _sec_recursion(
                x, p_scores, alpha, beta, theta, delta, phi, train.x_bar, half_dv
            )
        else:
            ln_mu = _vmem_recursion(x, alpha, beta, train.x_bar, half_dv)
        V = np.atleast_2d(np.cov(x - ln_mu, rowvar=False, bias=True))

    alpha, beta, theta, delta, phi = layout.expand(layout.natural_from_z(z_hat))
    params = ParamSet(
        alpha=alpha, beta=beta, V=V, x_bar=train.x_bar,
        theta=theta, delta=delta, phi=phi, c=c,
    )
    violations = _m.check_constraints(params, spec)
    if violations:
        raise EstimationError(
            "optimum sits outside the stationarity/invertibility region: "
            + "; ".join(violations)
        )
    std_errors = None
    if options.compute_std_errors:
        std_errors = sandwich_std_errors(panel, spec, params)
    return FitResult(
        params=params,
        spec=spec,
        loglik=trace[-1],
        loglik_trace=np.asarray(trace),
        std_errors=std_errors,
        free_names=layout.names,
        n_free=n_free,
        converged=converged,
        wall_time=time.perf_counter() - t_start,
    )


@njit(cache=True)
def _uni_recursion(x, xi_star, a, b, th, x_bar, half_v):
    T = x.shape[0]
    ln_mu = np.empty(T)
    omega = (1.0 - a - b) * x_bar + (1.0 - b) * half_v
    nu_prev = x_bar
    sig_prev = x_bar + half_v
    for t in range(T):
        s = omega + a * nu_prev + b * sig_prev
        ln_mu[t] = s + th * xi_star[t]
        nu_prev = x[t] - th * xi_star[t]
        sig_prev = s
    return ln_mu


@dataclass(frozen=True)
class UnivariateFit:
    """Single-series estimates from the second-stage regression fit."""

    alpha: float
    beta: float
    theta: float
    v: float
    loglik: float
    converged: bool
    std_errors: np.ndarray = None


def fit_univariate_mem_sec(x_i, xi_star=None, options=None, compute_std_errors=True):
    """Fit one series with the preliminary common path as a known regressor.

    With ``xi_star`` absent (or identically zero) the loading drops out and
    this reduces to a univariate log-MEM; the loading carries no
    normalization here because the regressor is treated as known.

    Parameters
    ----------
    x_i : ndarray
        Log-volatility series (training window).
    xi_star : ndarray, optional
        Preliminary common-component path, same length as ``x_i``.

    Returns
    -------
    UnivariateFit
    """
    options = options or FitOptions()
    x = np.asarray(x_i, dtype=float)
    if x.ndim != 1:
        raise ValueError("x_i must be one-dimensional")
    if np.var(x) < 1e-12:
        raise EstimationError("degenerate series: zero variance")
    include_theta = xi_star is not None and np.any(np.asarray(xi_star) != 0.0)
    xi = np.zeros_like(x) if xi_star is None else np.asarray(xi_star, dtype=float)
    if xi.shape != x.shape:
        raise ValueError("xi_star must match the series length")
    x_bar = float(x.mean())
    T = x.shape[0]

    def natural_from_z(z):
        b = float(np.clip(np.tanh(z[1]), -_TANH_CAP, _TANH_CAP))
        a = float(expit(z[0]) * (1.0 - b))
        th = float(z[2]) if include_theta else 0.0
        return a, b, th

    def make_neg_ll(v):
        const = T * (-0.5 * LOG_2PI - 0.5 * np.log(v)) - x.sum()
        half_v = 0.5 * v

        def neg_ll(z):
            a, b, th = natural_from_z(z)
            ln_mu = _uni_recursion(x, xi, a, b, th, x_bar, half_v)
            e = x - ln_mu + half_v
            return -(const - 0.5 * float(e @ e) / v)

        return neg_ll

    v = float(np.var(x))
    # start at alpha 0.05, beta 0.90 (z_a = 0 because alpha/(1-beta) = 0.5)
    z = np.array([0.0, np.arctanh(0.90), 1.0] if include_theta
                 else [0.0, np.arctanh(0.90)])
    trace = []
    converged = False
    for outer in range(options.max_outer_iterations):
        neg_ll = make_neg_ll(v)
        z, f_hat, _ = _inner_maximize(neg_ll, z, options)
        trace.append(-f_hat)
        if outer > 0 and abs(trace[-1] - trace[-2]) < options.outer_tolerance:
            converged = True
            break
        if outer == options.max_outer_iterations - 1:
            break
        a, b, th = natural_from_z(z)
        resid = x - _uni_recursion(x, xi, a, b, th, x_bar, 0.5 * v)
        v_new = float(np.var(resid))
        if v_new < 1e-14:
            raise EstimationError("degenerate series: residual variance collapsed")
        v = v_new

    a, b, th = natural_from_z(z)
    std_errors = None
    if compute_std_errors:
        half_v = 0.5 * v
        const_t = -0.5 * LOG_2PI - 0.5 * np.log(v)

        def per_obs(theta_nat):
            if include_theta:
                a_, b_, th_ = theta_nat
            else:
                a_, b_ = theta_nat
                th_ = 0.0
            ln_mu = _uni_recursion(x, xi, a_, b_, th_, x_bar, half_v)
            e = x - ln_mu + half_v
            return const_t - x - 0.5 * e * e / v

        theta0 = np.array([a, b, th] if include_theta else [a, b])
        std_errors = _sandwich_from_objectives(
            lambda t: float(per_obs(t).sum()), per_obs, theta0
        )
    return UnivariateFit(alpha=a, beta=b, theta=th, v=v, loglik=trace[-1],
                         converged=converged, std_errors=std_errors)


def fd_hessian(f, theta, rel_step=1e-4):
    """Central finite-difference Hessian with per-coordinate relative steps."""
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    h = rel_step * np.maximum(1.0, np.abs(theta))
    H = np.empty((k, k))
    f0 = f(theta)
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        H[i, i] = (f(theta + ei) - 2.0 * f0 + f(theta - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (
                f(theta + ei + ej) - f(theta + ei - ej)
                - f(theta - ei + ej) + f(theta - ei - ej)
            ) / (4.0 * h[i] * h[j])
    return H


def fd_scores(per_obs, theta, rel_step=1e-4):
    """Central finite-difference per-observation score matrix (T x k)."""
    theta = np.asarray(theta, dtype=float)
    k = theta.size
    h = rel_step * np.maximum(1.0, np.abs(theta))
    cols = []
    for j in range(k):
        ej = np.zeros(k)
        ej[j] = h[j]
        cols.append((per_obs(theta + ej) - per_obs(theta - ej)) / (2.0 * h[j]))
    return np.column_stack(cols)


def _sandwich_from_objectives(f_total, f_per_obs, theta, rel_step=1e-4):
    """Robust standard errors H^-1 S H^-1 from generic objectives."""
    H = -fd_hessian(f_total, theta, rel_step)
    cond = np.linalg.cond(H)
    if not np.isfinite(cond) or cond > 1e12:
        raise EstimationError(
            f"singular Hessian in sandwich estimator (condition number {cond:.3e})"
        )
    scores = fd_scores(f_per_obs, theta, rel_step)
    S = scores.T @ scores
    H_inv = np.linalg.inv(H)
    cov = H_inv @ S @ H_inv
    diag = np.diag(cov)
    if np.any(diag < 0.0):
        raise EstimationError("sandwich covariance has negative diagonal entries")
    return np.sqrt(diag)


def sandwich_std_errors(panel, spec, params, rel_step=1e-4):
    """Robust standard errors for the free coefficients of a fitted model.

    The Hessian of the total log-likelihood and the per-observation score
    outer product are both taken by central finite differences in the natural
    (untransformed) free-parameter space, holding the concentrated covariance
    fixed.  Evaluation uses the panel's training window, matching the fit.
    """
    train = panel.training_view()
    x = train.x
    layout = _Layout.from_spec(spec, train.tickers)
    theta0 = layout.pack(params)
    L = _m._cholesky_factor(params.V)
    half_dv = 0.5 * np.diag(params.V)
    log_det = 2.0 * np.log(np.diag(L)).sum()
    n = x.shape[1]
    base = -0.5 * n * LOG_2PI - 0.5 * log_det - x.sum(axis=1)
    p_scores = (x - params.x_bar) @ params.c if spec.is_sec else None

    def per_obs(free):
        alpha, beta, theta, delta, phi = layout.expand(free)
        if spec.is_sec:
            ln_mu, _, _, _ = _sec_recursion(
                x, p_scores, alpha, beta, theta, delta, phi, params.x_bar, half_dv
            )
        else:
            ln_mu = _vmem_recursion(x, alpha, beta, params.x_bar, half_dv)
        e = x - ln_mu + half_dv
        zres = solve_triangular(L, e.T, lower=True, check_finite=False)
        return base - 0.5 * np.einsum("ij,ij->j", zres, zres)

    return _sandwich_from_objectives(
        lambda t: float(per_obs(t).sum()), per_obs, theta0, rel_step
    )


def free_parameter_names(spec, tickers):
    """Reporting names for the free coefficient vector of a bound spec."""
    return _Layout.from_spec(spec, tickers).names
