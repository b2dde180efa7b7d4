"""Compare competing specifications out of sample.

Fits plain and spillover variants on a training window, produces one-step
forecasts for the held-out rows, and tests which models survive the model
confidence set under squared-error and robust losses.
"""

import vmemsec as v
from _common import simulated_sec_panel

# panel with the last 300 rows held out
spec_true, params_true, panel = simulated_sec_panel(n_periods=2300, seed=12,
                                                    split=2000)
factor = v.first_principal_component(panel)
options = v.FitOptions(seed=1, compute_std_errors=False)

print("1. fitting three specifications on the training window")
candidates = {
    "s-vmem": (v.ModelSpec.for_tickers("vmem", "scalar", panel.tickers), None),
    "s-vmem-sec": (v.ModelSpec.for_tickers("vmem-sec", "scalar", panel.tickers),
                   factor),
    "c-vmem-sec": (spec_true, factor),
}
fits = {}
for name, (spec, fac) in candidates.items():
    fits[name] = v.fit(panel, fac, spec, options)
    aic, bic = v.information_criteria(fits[name].loglik, fits[name].n_free,
                                      panel.n_train)
    print(f"   {name:10s} loglik {fits[name].loglik:10.2f}  "
          f"aic {aic:8.4f}  bic {bic:8.4f}")

print("2. out-of-sample losses (one-step forecasts, lower is better)")
y_oos = panel.y[panel.window_rows("oos")]
losses_mse, losses_qlike = [], []
for name, res in fits.items():
    mu = v.forecast_one_step(panel, res.spec, res.params, "oos")
    mse = v.loss_mse(y_oos, mu, model_id=name, window="oos")
    qlike = v.loss_qlike(y_oos, mu, model_id=name, window="oos")
    losses_mse.append(mse)
    losses_qlike.append(qlike)
    print(f"   {name:10s} mse {mse.aggregate:8.4f}   qlike {qlike.aggregate:8.4f}")

print("3. model confidence set at the 5% level (1000 block-bootstrap draws)")
for label, losses in (("mse", losses_mse), ("qlike", losses_qlike)):
    mcs = v.model_confidence_set(losses, alpha=0.05, n_bootstrap=1000,
                                 block_length=20, seed=1)
    surviving = ", ".join(mcs.included)
    print(f"   {label:5s}: surviving set {{{surviving}}}")
    for model, p in mcs.elimination_order:
        print(f"          eliminated {model} (p = {p:.3f})")
