import numpy as np
import pytest
from numpy.testing import assert_allclose

import vmemsec as v

from conftest import make_panel

# reported log-likelihoods, our free-parameter counts, and the printed
# criteria values they must reproduce (T = 4051 rows)
CRITERIA_TABLE = [
    ("s-vmem", 416608.3, 2, -205.68, -205.68),
    ("d-vmem", 416698.5, 58, -205.70, -205.61),
    ("c-vmem", 416619.2, 6, -205.68, -205.67),
    ("s-vmem-sec", 417245.0, 4, -205.99, -205.99),
    ("d-vmem-sec", 417441.2, 89, -206.05, -205.91),
    ("c-vmem-sec", 417336.4, 13, -206.03, -206.01),
]


class TestLosses:
    def test_perfect_forecast(self):
        rng = np.random.default_rng(0)
        y = rng.uniform(0.5, 2.0, size=(20, 3))
        mse = v.loss_mse(y, y)
        qlike = v.loss_qlike(y, y)
        assert mse.aggregate == 0.0
        assert_allclose(qlike.aggregate, np.log(y).mean() + 1.0, rtol=1e-12)

    def test_single_cell(self):
        mse = v.loss_mse(np.array([[2.0]]), np.array([[1.0]]))
        qlike = v.loss_qlike(np.array([[2.0]]), np.array([[1.0]]))
        assert mse.aggregate == 1.0
        assert qlike.aggregate == 2.0

    def test_aggregate_is_grand_mean(self):
        rng = np.random.default_rng(1)
        y = rng.uniform(0.5, 2.0, size=(15, 4))
        mu = rng.uniform(0.5, 2.0, size=(15, 4))
        ls = v.loss_mse(y, mu)
        assert_allclose(ls.aggregate, ls.per_obs.mean(), rtol=1e-12)

    def test_reordering_invariance(self):
        rng = np.random.default_rng(2)
        y = rng.uniform(0.5, 2.0, size=(10, 3))
        mu = rng.uniform(0.5, 2.0, size=(10, 3))
        perm_t = rng.permutation(10)
        perm_i = rng.permutation(3)
        a = v.loss_qlike(y, mu).aggregate
        b = v.loss_qlike(y[perm_t][:, perm_i], mu[perm_t][:, perm_i]).aggregate
        assert_allclose(a, b, rtol=1e-12)

    def test_qlike_minimized_at_truth(self):
        y = 1.7
        grid = np.linspace(0.2, 5.0, 481)
        losses = np.log(grid) + y / grid
        assert_allclose(grid[np.argmin(losses)], y, atol=0.01)

    def test_non_positive_mu(self):
        with pytest.raises(ValueError, match="positive"):
            v.loss_qlike(np.array([1.0]), np.array([0.0]))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError, match="shape"):
            v.loss_mse(np.zeros((2, 2)), np.zeros((3, 2)))


class TestInformationCriteria:
    @pytest.mark.parametrize("model,loglik,k,aic,bic", CRITERIA_TABLE)
    def test_reported_table(self, model, loglik, k, aic, bic):
        got_aic, got_bic = v.information_criteria(loglik, k, 4051)
        assert abs(got_aic - aic) <= 0.01, model
        assert abs(got_bic - bic) <= 0.01, model

    def test_degenerate(self):
        assert v.information_criteria(0.0, 0, 1) == (0.0, 0.0)

    def test_positive_T_required(self):
        with pytest.raises(ValueError):
            v.information_criteria(1.0, 1, 0)


class TestForecast:
    def test_constant_model(self):
        n = 2
        params = v.ParamSet(alpha=np.zeros(n), beta=np.zeros(n),
                            V=np.diag([0.2, 0.5]), x_bar=np.array([0.1, -0.4]),
                            theta=np.ones(n), delta=0.0, phi=0.0,
                            c=np.full(n, 1 / np.sqrt(2)))
        panel = make_panel(np.random.default_rng(3).normal(size=(12, n)),
                           split_index=8)
        spec = v.ModelSpec.for_tickers("vmem-sec", "diagonal", panel.tickers)
        mu = v.forecast_one_step(panel, spec, params, "oos")
        expected = np.exp(params.x_bar + 0.5 * np.diag(params.V))
        assert mu.shape == (4, n)
        assert_allclose(mu, np.tile(expected, (4, 1)), rtol=1e-12)

    def test_hand_case_row(self, hand_case):
        panel, spec, params, *_ = hand_case
        mu = v.forecast_one_step(panel, spec, params, "is")
        assert_allclose(mu[2], [1.6612992882821276, 0.7276027884145955], rtol=1e-12)

    def test_training_forecasts_equal_filter(self, hand_case):
        panel, spec, params, *_ = hand_case
        mu = v.forecast_one_step(panel, spec, params, "is")
        filt = v.filter_paths(panel, spec, params)
        assert np.array_equal(mu, np.exp(filt.ln_mu))

    def test_missing_window(self, hand_case):
        panel, spec, params, *_ = hand_case
        with pytest.raises(ValueError, match="no out-of-sample"):
            v.forecast_one_step(panel, spec, params, "oos")


def _loss_list(per_obs_by_model):
    return [v.LossSeries(model_id=k, per_obs=p, window="is")
            for k, p in per_obs_by_model.items()]


class TestMcs:
    def test_identical_losses_all_retained(self):
        rng = np.random.default_rng(4)
        base = rng.uniform(0.5, 1.5, size=(300, 2))
        res = v.model_confidence_set(_loss_list({"a": base, "b": base, "c": base}),
                                     n_bootstrap=200, seed=1)
        assert set(res.included) == {"a", "b", "c"}
        assert all(p == 1.0 for p in res.pvalues.values())

    def test_dominated_model_eliminated(self):
        rng = np.random.default_rng(5)
        base = rng.uniform(0.5, 1.5, size=(500, 1))
        worse = base + 1.0 + rng.normal(scale=0.1, size=(500, 1))
        res = v.model_confidence_set(_loss_list({"good": base, "bad": worse}),
                                     n_bootstrap=1000, seed=2)
        assert res.included == ("good",)
        assert res.pvalues["bad"] < 0.01
        assert res.elimination_order[0][0] == "bad"

    def test_deterministic_given_seed(self):
        rng = np.random.default_rng(6)
        losses = {k: rng.uniform(0.5, 1.5, size=(200, 2)) for k in "abcd"}
        r1 = v.model_confidence_set(_loss_list(losses), n_bootstrap=300, seed=9)
        r2 = v.model_confidence_set(_loss_list(losses), n_bootstrap=300, seed=9)
        assert r1.included == r2.included
        assert r1.pvalues == r2.pvalues

    def test_survivors_never_empty(self):
        rng = np.random.default_rng(7)
        losses = {f"m{i}": rng.uniform(0.5, 1.5, size=(150, 1)) + 0.3 * i
                  for i in range(4)}
        res = v.model_confidence_set(_loss_list(losses), n_bootstrap=300, seed=3)
        assert len(res.included) >= 1
        assert set(res.pvalues) == set(losses)

    def test_needs_two_models(self):
        with pytest.raises(ValueError, match="at least 2"):
            v.model_confidence_set(_loss_list({"a": np.zeros((10, 1))}))

    def test_pvalues_in_unit_interval(self):
        rng = np.random.default_rng(8)
        losses = {f"m{i}": rng.uniform(0.5, 1.5, size=(100, 3)) for i in range(3)}
        res = v.model_confidence_set(_loss_list(losses), n_bootstrap=200, seed=4)
        assert all(0.0 <= p <= 1.0 for p in res.pvalues.values())
