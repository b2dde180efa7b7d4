import datetime as dt

import numpy as np
import pytest
from numpy.testing import assert_allclose

import vmemsec as v

from conftest import make_panel, sec_design


def scalar_sec_params(alpha, beta, delta, phi, c_val, n=1, v_diag=0.1):
    return v.ParamSet(
        alpha=np.full(n, alpha), beta=np.full(n, beta),
        V=np.eye(n) * v_diag, x_bar=np.zeros(n),
        theta=np.ones(n), delta=delta, phi=phi, c=np.full(n, c_val),
    )


class TestModelSpec:
    def test_scalar_and_diagonal_maps(self):
        tick = ["A", "B", "C"]
        s = v.ModelSpec.for_tickers("vmem-sec", "scalar", tick)
        assert s.k1 == 1 and s.k2 == 1 and s.label == "s-vmem-sec"
        d = v.ModelSpec.for_tickers("vmem", "diagonal", tick)
        assert d.k1 == 3 and d.k2 is None and d.label == "d-vmem"

    def test_group_contiguity_enforced(self):
        with pytest.raises(ValueError, match="contiguous"):
            v.ModelSpec("vmem", "clustered", {"A": 1, "B": 3})

    def test_vmem_rejects_theta_groups(self):
        with pytest.raises(ValueError, match="theta_groups"):
            v.ModelSpec("vmem", "scalar", {"A": 1}, {"A": 1})

    def test_scalar_requires_single_group(self):
        with pytest.raises(ValueError, match="single ab group"):
            v.ModelSpec("vmem", "scalar", {"A": 1, "B": 2})

    def test_round_trip(self):
        spec, _, _ = sec_design()
        again = v.ModelSpec.from_dict(spec.to_dict())
        assert again == spec


class TestCountParameters:
    def test_full_ten_series(self):
        assert v.count_parameters("vmem-sec", "full", 10) == 86

    def test_clustered_four_four(self):
        assert v.count_parameters("vmem-sec", "clustered", 10, k1=4, k2=4) == 13

    def test_scalar(self):
        assert v.count_parameters("vmem", "scalar", 29) == 2
        assert v.count_parameters("vmem-sec", "scalar", 29) == 4

    def test_diagonal(self):
        assert v.count_parameters("vmem", "diagonal", 29) == 58
        assert v.count_parameters("vmem-sec", "diagonal", 29) == 89

    def test_clustered_vmem(self):
        assert v.count_parameters("vmem", "clustered", 29, k1=3) == 6

    def test_full_needs_sec(self):
        with pytest.raises(ValueError):
            v.count_parameters("vmem", "full", 10)


class TestCheckConstraints:
    def test_typical_estimates_pass(self):
        params = scalar_sec_params(0.1, 0.8, delta=0.07, phi=0.37, c_val=0.18)
        assert v.check_constraints(params) == []

    def test_phi_on_boundary(self):
        params = scalar_sec_params(0.1, 0.8, delta=0.0, phi=1.0, c_val=0.18)
        msgs = v.check_constraints(params)
        assert any("invertibility of common component" in m for m in msgs)

    def test_loading_feasibility(self):
        # delta*c = 0.02 exceeds 1 - (alpha+beta) = 0.01
        params = scalar_sec_params(0.3, 0.69, delta=0.2, phi=0.1, c_val=0.1)
        msgs = v.check_constraints(params)
        assert any("common-loading" in m for m in msgs)

    def test_vmem_checks_only_ab(self):
        params = v.ParamSet(alpha=np.array([0.6]), beta=np.array([0.5]),
                            V=np.eye(1), x_bar=np.zeros(1))
        msgs = v.check_constraints(params)
        assert len(msgs) == 1 and "stationarity of idiosyncratic" in msgs[0]


class TestParamSet:
    def test_m_is_tied_to_v(self):
        _, params, _ = sec_design()
        assert_allclose(params.m, -0.5 * np.diag(params.V), rtol=0, atol=0)

    def test_theta_normalization_enforced(self):
        with pytest.raises(ValueError, match="sum to n"):
            v.ParamSet(alpha=np.zeros(2), beta=np.zeros(2), V=np.eye(2),
                       x_bar=np.zeros(2), theta=np.array([0.5, 0.6]),
                       delta=0.0, phi=0.0, c=np.full(2, 0.7))

    def test_json_round_trip(self):
        import json
        _, params, _ = sec_design()
        again = v.ParamSet.from_dict(json.loads(json.dumps(params.to_dict())))
        assert_allclose(again.alpha, params.alpha, rtol=0, atol=0)
        assert_allclose(again.V, params.V, rtol=0, atol=0)
        assert again.delta == params.delta


class TestFilter:
    def test_all_dynamics_off(self):
        n = 3
        params = v.ParamSet(alpha=np.zeros(n), beta=np.zeros(n),
                            V=np.diag([0.2, 0.4, 0.6]),
                            x_bar=np.array([0.1, -0.2, 0.3]),
                            theta=np.ones(n), delta=0.0, phi=0.0,
                            c=np.full(n, 1 / np.sqrt(n)))
        panel = make_panel(np.random.default_rng(0).normal(size=(10, n)))
        spec = v.ModelSpec.for_tickers("vmem-sec", "diagonal", panel.tickers)
        filt = v.filter_paths(panel, spec, params)
        expected = params.x_bar + 0.5 * np.diag(params.V)
        assert_allclose(filt.ln_mu, np.tile(expected, (10, 1)), atol=1e-14)

    def test_fixed_point_input(self, hand_case):
        _, spec, params, *_ = hand_case
        x = np.tile(params.x_bar, (6, 1))
        panel = make_panel(x, tickers=("AA", "BB"))
        filt = v.filter_paths(panel, spec, params)
        fixed = params.x_bar + 0.5 * np.diag(params.V)
        assert_allclose(filt.p, np.zeros(6), atol=1e-14)
        assert_allclose(filt.xi, np.zeros(6), atol=1e-14)
        assert_allclose(filt.varsigma, np.tile(fixed, (6, 1)), atol=1e-14)

    def test_hand_recursion_oracle(self, hand_case):
        panel, spec, params, ln_mu, xi, p, loglik = hand_case
        filt = v.filter_paths(panel, spec, params)
        assert_allclose(filt.ln_mu, ln_mu, atol=1e-12)
        assert_allclose(filt.xi, xi, atol=1e-12)
        assert_allclose(filt.p, p, atol=1e-12)
        assert_allclose(v.log_likelihood(panel, filt, params), loglik, atol=1e-10)

    def test_hand_recursion_recomputed_stepwise(self, hand_case):
        # independent scalar recomputation of the same path
        panel, spec, params, *_ = hand_case
        filt = v.filter_paths(panel, spec, params)
        a, b, th = params.alpha, params.beta, params.theta
        d, f, xb = params.delta, params.phi, params.x_bar
        hv = 0.5 * np.diag(params.V)
        xi_prev, p_prev = 0.0, 0.0
        nu_prev = xb.copy()
        sig_prev = xb + hv
        for t in range(panel.n_obs):
            xi_t = d * p_prev + f * xi_prev
            for i in range(2):
                s = ((1 - a[i] - b[i]) * xb[i] + (1 - b[i]) * hv[i]
                     + a[i] * nu_prev[i] + b[i] * sig_prev[i])
                assert_allclose(filt.varsigma[t, i], s, atol=1e-14)
                assert_allclose(filt.ln_mu[t, i], s + th[i] * xi_t, atol=1e-14)
            nu_prev = panel.x[t] - th * xi_t
            sig_prev = filt.varsigma[t]
            p_prev = params.c @ (panel.x[t] - xb)
            xi_prev = xi_t

    def test_constraint_violation_rejected(self, hand_case):
        panel, spec, params, *_ = hand_case
        bad = params.replace(phi=1.0)
        with pytest.raises(ValueError, match="constraint violations"):
            v.filter_paths(panel, spec, bad)

    def test_output_identity(self, hand_case):
        panel, spec, params, *_ = hand_case
        filt = v.filter_paths(panel, spec, params)
        recomposed = filt.varsigma + np.outer(filt.xi, params.theta)
        assert np.array_equal(filt.ln_mu, recomposed)

    def test_vmem_equals_sec_with_common_off(self, hand_case):
        panel, spec, params, *_ = hand_case
        filt_sec = v.filter_paths(panel, spec, params.replace(delta=0.0, phi=0.0))
        spec_v = v.ModelSpec.for_tickers("vmem", "diagonal", panel.tickers)
        params_v = v.ParamSet(alpha=params.alpha, beta=params.beta,
                              V=params.V, x_bar=params.x_bar)
        filt_v = v.filter_paths(panel, spec_v, params_v)
        assert_allclose(filt_sec.ln_mu, filt_v.ln_mu, atol=1e-12)
        assert np.all(filt_sec.xi == 0.0)

    def test_sign_flip_invariance(self, hand_case):
        panel, spec, params, *_ = hand_case
        flipped = params.replace(c=-params.c, delta=-params.delta)
        f1 = v.filter_paths(panel, spec, params)
        f2 = v.filter_paths(panel, spec, flipped)
        assert_allclose(f2.ln_mu, f1.ln_mu, atol=1e-10)
        assert_allclose(f2.xi, f1.xi, atol=1e-10)
        ll1 = v.log_likelihood(panel, f1, params)
        ll2 = v.log_likelihood(panel, f2, flipped)
        assert_allclose(ll2, ll1, atol=1e-10)

    def test_scale_equivariance(self, hand_case):
        panel, spec, params, *_ = hand_case
        k = 3.7
        scaled_panel = make_panel(panel.x + np.log(k), tickers=panel.tickers)
        scaled_params = params.replace(x_bar=params.x_bar + np.log(k))
        f1 = v.filter_paths(panel, spec, params)
        f2 = v.filter_paths(scaled_panel, spec, scaled_params)
        assert_allclose(f2.ln_mu, f1.ln_mu + np.log(k), atol=1e-12)
        ll1 = v.log_likelihood(panel, f1, params)
        ll2 = v.log_likelihood(scaled_panel, f2, scaled_params)
        shift = -panel.n_obs * panel.n_series * np.log(k)
        assert_allclose(ll2 - ll1, shift, rtol=1e-6)


class TestPerEquation:
    def test_delta_zero_collapses_spillovers(self, hand_case):
        _, spec, params, *_ = hand_case
        coefs = v.per_equation_coefficients(spec, params.replace(delta=0.0))
        assert_allclose(coefs.own_lag, params.alpha, atol=1e-15)
        assert_allclose(coefs.spillover, np.zeros((2, 2)), atol=1e-15)
        expected = (params.phi - params.alpha - params.beta) * params.theta
        assert_allclose(coefs.common_factor, expected, atol=1e-15)

    def test_reported_common_coefficient_arithmetic(self):
        # clustered estimates: (0.391 - 0.132 - 0.826) * 0.884 = -0.5013
        value = (0.391 - 0.132 - 0.826) * 0.884
        assert_allclose(value, -0.5013, atol=5e-4)
        assert_allclose(value, -0.501, atol=5e-4)

    def test_vmem_unsupported(self):
        spec = v.ModelSpec.for_tickers("vmem", "scalar", ["A", "B"])
        params = v.ParamSet(alpha=np.full(2, 0.1), beta=np.full(2, 0.8),
                            V=np.eye(2), x_bar=np.zeros(2))
        with pytest.raises(ValueError, match="vmem-sec"):
            v.per_equation_coefficients(spec, params)

    def test_expansion_matches_filter(self):
        # every equation, every t >= 2: the filter path equals the
        # lag-polynomial expansion built from the reported coefficients
        rng = np.random.default_rng(11)
        spec, params, _ = sec_design()
        panel = v.simulate(spec, params, 40, seed=3)
        filt = v.filter_paths(panel, spec, params)
        coefs = v.per_equation_coefficients(spec, params)
        xb = params.x_bar
        intercept = xb + (1.0 - params.beta) * 0.5 * np.diag(params.V)
        for t in range(1, panel.n_obs):
            for i in range(panel.n_series):
                val = (intercept[i]
                       + coefs.own_lag[i] * (panel.x[t - 1, i] - xb[i])
                       + coefs.inertia[i] * (filt.ln_mu[t - 1, i] - xb[i])
                       + coefs.spillover[i] @ (panel.x[t - 1] - xb)
                       + coefs.common_factor[i] * filt.xi[t - 1])
                assert_allclose(filt.ln_mu[t, i], val, atol=1e-10)


class TestLogLikelihood:
    def test_scalar_zero_residual(self):
        panel = v.VolatilityPanel(("A",), (dt.date(2021, 1, 1),),
                                  np.array([[1.0]]))  # x = 0
        params = v.ParamSet(alpha=np.zeros(1), beta=np.zeros(1),
                            V=np.array([[4.0]]), x_bar=np.zeros(1))
        filt = v.FilterOutput(ln_mu=np.array([[2.0]]), varsigma=np.array([[2.0]]),
                              xi=np.zeros(1), nu=np.zeros((1, 1)), p=np.zeros(1))
        ll = v.log_likelihood(panel, filt, params)
        assert_allclose(ll, -1.612085713764618, atol=1e-6)

    def test_diagonal_v_decomposes_into_scalars(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(30, 2))
        panel = make_panel(x)
        v_diag = np.array([0.3, 0.7])
        params = v.ParamSet(alpha=np.zeros(2), beta=np.zeros(2),
                            V=np.diag(v_diag), x_bar=np.zeros(2))
        ln_mu = rng.normal(size=(30, 2))
        filt = v.FilterOutput(ln_mu=ln_mu, varsigma=ln_mu, xi=np.zeros(30),
                              nu=x, p=np.zeros(30))
        total = v.log_likelihood(panel, filt, params)
        # brute-force scalar decomposition
        expected = 0.0
        for i in range(2):
            m = -0.5 * v_diag[i]
            e = x[:, i] - ln_mu[:, i] - m
            expected += np.sum(-0.5 * np.log(2 * np.pi) - 0.5 * np.log(v_diag[i])
                               - x[:, i] - 0.5 * e ** 2 / v_diag[i])
        assert_allclose(total, expected, rtol=1e-12)

    def test_per_obs_sums_to_total(self, hand_case):
        panel, spec, params, *_ = hand_case
        filt = v.filter_paths(panel, spec, params)
        total = v.log_likelihood(panel, filt, params)
        assert_allclose(filt.per_obs_loglik.sum(), total, rtol=1e-8)

    def test_non_positive_definite_v(self, hand_case):
        panel, spec, params, *_ = hand_case
        filt = v.filter_paths(panel, spec, params)
        bad = params.replace(V=np.array([[1.0, 2.0], [2.0, 1.0]]))
        with pytest.raises(ValueError, match="covariance not positive definite"):
            v.log_likelihood(panel, filt, bad)


class TestTargeting:
    def test_dynamics_off(self):
        x_bar = np.array([0.3, -0.5])
        V = np.diag([0.4, 1.0])
        omega = v.targeting_intercept(np.zeros(2), np.zeros(2), x_bar, V)
        assert_allclose(omega, x_bar + 0.5 * np.diag(V), atol=1e-15)

    def test_half_weights(self):
        omega = v.targeting_intercept(np.full(3, 0.5), np.full(3, 0.5),
                                      np.array([1.0, -2.0, 5.0]), np.eye(3) * 2.0)
        assert_allclose(omega, np.full(3, 0.5), atol=1e-15)

    def test_fixed_point_identity(self):
        rng = np.random.default_rng(13)
        alpha = rng.uniform(0.02, 0.2, size=4)
        beta = rng.uniform(0.4, 0.75, size=4)
        x_bar = rng.normal(size=4)
        V = np.diag(rng.uniform(0.1, 1.0, size=4))
        omega = v.targeting_intercept(alpha, beta, x_bar, V)
        mean = (omega + alpha * x_bar) / (1.0 - beta)
        assert_allclose(mean, x_bar + 0.5 * np.diag(V), rtol=1e-12)


class TestSimulate:
    def test_iid_case_mean(self):
        n = 2
        params = v.ParamSet(alpha=np.zeros(n), beta=np.zeros(n),
                            V=np.diag([0.09, 0.25]), x_bar=np.array([0.4, -0.6]),
                            theta=np.ones(n), delta=0.0, phi=0.0,
                            c=np.full(n, 1 / np.sqrt(2)))
        spec = v.ModelSpec.for_tickers("vmem-sec", "diagonal", ["A", "B"])
        panel = v.simulate(spec, params, 100_000, seed=21)
        se = np.sqrt(np.diag(params.V) / panel.n_obs)
        assert np.all(np.abs(panel.x.mean(axis=0) - params.x_bar) < 3 * se)

    def test_unit_mean_innovations(self):
        spec, params, _ = sec_design()
        panel = v.simulate(spec, params, 100_000, seed=22)
        mu = np.exp(v.filter_paths(panel, spec, params).ln_mu)
        eps = panel.y / mu
        sd = np.sqrt(np.exp(np.diag(params.V)) - 1.0)
        se = 3.0 * sd / np.sqrt(panel.n_obs)
        assert np.all(np.abs(eps.mean(axis=0) - 1.0) < se)

    def test_self_consistency_refilter(self):
        # re-filtering the draw at its true parameters reproduces the
        # simulation's own state paths
        from vmemsec.model import _sec_simulation

        spec, params, _ = sec_design()
        panel = v.simulate(spec, params, 500, seed=23)
        rng = np.random.default_rng(23)
        L = np.linalg.cholesky(params.V)
        ln_eps = params.m + rng.standard_normal((500, 4)) @ L.T
        x_sim, ln_mu_sim, xi_sim = _sec_simulation(
            ln_eps, params.alpha, params.beta, params.theta, params.delta,
            params.phi, params.x_bar, 0.5 * np.diag(params.V), params.c,
        )
        assert_allclose(panel.x, x_sim, atol=1e-12)
        filt = v.filter_paths(panel, spec, params)
        assert_allclose(filt.xi, xi_sim, atol=1e-12)
        assert_allclose(filt.ln_mu, ln_mu_sim, atol=1e-12)

    def test_determinism(self):
        spec, params, _ = sec_design()
        a = v.simulate(spec, params, 200, seed=23)
        b = v.simulate(spec, params, 200, seed=23)
        assert np.array_equal(a.y, b.y)

    def test_explosive_rejected(self):
        spec, params, _ = sec_design()
        bad = params.replace(beta=np.full(4, 1.2), alpha=np.full(4, -0.3))
        with pytest.raises(ValueError, match="constraint violations"):
            v.simulate(spec, bad, 100, seed=0)


class TestFilterCsv:
    def test_export_parses(self, tmp_path, hand_case):
        panel, spec, params, *_ = hand_case
        filt = v.filter_paths(panel, spec, params)
        path = tmp_path / "filter.csv"
        v.save_filter_csv(filt, panel, path)
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "date,ticker,ln_mu,varsigma,xi"
        assert len(lines) == 1 + panel.n_obs * panel.n_series
        first = lines[1].split(",")
        assert first[0] == "2020-01-01" and first[1] == "AA"
        assert_allclose(float(first[2]), filt.ln_mu[0, 0], rtol=0, atol=0)
