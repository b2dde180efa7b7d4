"""Command-line interface: ingest, factor, cluster, fit, forecast, evaluate,
simulate, and the full pipeline runner.

Every stage reads and writes plain CSV/JSON artifacts so runs are scriptable
and reproducible; rendering is left to external tools, with tidy plot-data
files emitted for the common-component, fitted-vs-observed, and
decomposition figures.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import logging
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import cluster as _cluster
from . import evaluate as _evaluate
from . import factor as _factor
from . import model as _model
from . import panel as _panel
from .estimate import FitOptions, FitResult, fit

logger = logging.getLogger("vmemsec")

MODEL_IDS = {
    "s-vmem": ("vmem", "scalar"),
    "d-vmem": ("vmem", "diagonal"),
    "c-vmem": ("vmem", "clustered"),
    "s-vmem-sec": ("vmem-sec", "scalar"),
    "d-vmem-sec": ("vmem-sec", "diagonal"),
    "c-vmem-sec": ("vmem-sec", "clustered"),
}


class StageError(RuntimeError):
    def __init__(self, stage, cause):
        super().__init__(f"[{stage}] {cause}")
        self.stage = stage


def _parse_split(value):
    return dt.date.fromisoformat(value) if value else None


def _seed(args):
    return 0 if args.seed is None else args.seed


def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(value):
    return repr(float(value))


def _fit_options(args, seed):
    return FitOptions(
        outer_tolerance=getattr(args, "outer_tolerance", 1e-4),
        max_outer_iterations=getattr(args, "max_outer_iterations", 50),
        seed=seed,
    )


def cmd_ingest(args):
    panel = _panel.load_panel_csv(args.input, split_date=_parse_split(args.split_date),
                                  fmt=args.format)
    _panel.save_panel_csv(panel, args.out)
    logger.info("panel: %d rows x %d tickers -> %s", panel.n_obs, panel.n_series, args.out)
    return 0


def cmd_factor(args):
    panel = _panel.load_panel_csv(args.panel, split_date=_parse_split(args.split_date))
    fac = _factor.first_principal_component(panel)
    _write_csv(args.out, ["date", "p"],
               [[d.isoformat(), _fmt(p)] for d, p in zip(panel.dates, fac.scores)])
    sidecar = str(Path(args.out).with_suffix("")) + "_loadings.csv"
    _write_csv(sidecar, ["ticker", "c"],
               [[t, _fmt(c)] for t, c in zip(panel.tickers, fac.loadings)])
    logger.info("explained share %.4f -> %s (+ %s)", fac.explained_share, args.out, sidecar)
    return 0


def cmd_cluster(args):
    panel = _panel.load_panel_csv(args.panel, split_date=_parse_split(args.split_date))
    fac = _factor.first_principal_component(panel) if args.variant == "vmem-sec" else None
    result = _cluster.clustering_pipeline(
        panel, fac, options=_fit_options(args, _seed(args)), variant=args.variant,
    )
    with open(args.out, "w") as fh:
        json.dump(result.model_spec.to_dict(), fh, indent=2)
    stem = str(Path(args.out).with_suffix(""))
    rows = []
    for t in panel.tickers:
        theta_g = (result.theta_partition.assignment[t]
                   if result.theta_partition else "")
        rows.append([t, result.ab_partition.assignment[t], theta_g])
    _write_csv(stem + "_partition.csv", ["ticker", "ab_group", "theta_group"], rows)
    _write_dendrogram(stem + "_dendrogram_ab.csv", result.ab_dendrogram)
    if result.theta_dendrogram is not None:
        _write_dendrogram(stem + "_dendrogram_theta.csv", result.theta_dendrogram)
    logger.info("k1=%d%s -> %s", result.ab_partition.k,
                f", k2={result.theta_partition.k}" if result.theta_partition else "",
                args.out)
    return 0


def _write_dendrogram(path, dendro):
    _write_csv(path, ["left", "right", "height"],
               [[int(l), int(r), _fmt(h)] for l, r, h in dendro.merges])


def _resolve_spec(model_arg, panel, fac, options):
    """Model shorthand or spec-JSON path -> bound ModelSpec."""
    if model_arg in MODEL_IDS:
        variant, parameterization = MODEL_IDS[model_arg]
        if parameterization == "clustered":
            result = _cluster.clustering_pipeline(
                panel, fac if variant == "vmem-sec" else None,
                options=options, variant=variant,
            )
            return result.model_spec
        return _model.ModelSpec.for_tickers(variant, parameterization, panel.tickers)
    with open(model_arg) as fh:
        return _model.ModelSpec.from_dict(json.load(fh))


def cmd_fit(args):
    panel = _panel.load_panel_csv(args.panel, split_date=_parse_split(args.split_date))
    fac = None
    if args.model in MODEL_IDS:
        if MODEL_IDS[args.model][0] == "vmem-sec":
            fac = _factor.first_principal_component(panel)
        options = _fit_options(args, _seed(args))
        spec = _resolve_spec(args.model, panel, fac, options)
    else:
        options = _fit_options(args, _seed(args))
        spec = _resolve_spec(args.model, panel, None, options)
        if spec.is_sec:
            fac = _factor.first_principal_component(panel)
    result = fit(panel, fac, spec, options)
    with open(args.out, "w") as fh:
        json.dump(result.to_dict(), fh, indent=2)
    logger.info("%s loglik %.4f converged=%s -> %s",
                spec.label, result.loglik, result.converged, args.out)
    return 0


def cmd_forecast(args):
    panel = _panel.load_panel_csv(args.panel, split_date=_parse_split(args.split_date))
    with open(args.fit) as fh:
        result = FitResult.from_dict(json.load(fh))
    mu = _evaluate.forecast_one_step(panel, result.spec, result.params, args.window)
    rows = panel.window_rows(args.window)
    dates = panel.dates[rows]
    out_rows = []
    for t, d in enumerate(dates):
        for i, tic in enumerate(panel.tickers):
            out_rows.append([d.isoformat(), tic, _fmt(mu[t, i])])
    _write_csv(args.out, ["date", "ticker", "mu"], out_rows)
    return 0


def cmd_evaluate(args):
    panel = _panel.load_panel_csv(args.panel, split_date=_parse_split(args.split_date))
    fit_paths = sorted(Path(args.fits).glob("fit_*.json"))
    if not fit_paths:
        fit_paths = sorted(Path(args.fits).glob("*.json"))
    if not fit_paths:
        raise ValueError(f"no fit files found under {args.fits}")
    fits = []
    for p in fit_paths:
        with open(p) as fh:
            fits.append((p.stem.removeprefix("fit_"), FitResult.from_dict(json.load(fh))))
    rows, mse_losses, qlike_losses = [], [], []
    y_eval = panel.y[panel.window_rows(args.window)]
    for model_id, result in fits:
        mu = _evaluate.forecast_one_step(panel, result.spec, result.params, args.window)
        mse = _evaluate.loss_mse(y_eval, mu, model_id=model_id, window=args.window)
        qlike = _evaluate.loss_qlike(y_eval, mu, model_id=model_id, window=args.window)
        mse_losses.append(mse)
        qlike_losses.append(qlike)
        aic, bic = _evaluate.information_criteria(result.loglik, result.n_free,
                                                  panel.n_train)
        rows.append([model_id, _fmt(result.loglik), result.n_free,
                     _fmt(aic), _fmt(bic), _fmt(mse.aggregate), _fmt(qlike.aggregate)])
    header = ["model", "loglik", "n_free", "aic", "bic", "mse", "qlike"]
    if args.mcs and len(fits) >= 2:
        mcs_mse = _evaluate.model_confidence_set(mse_losses, seed=_seed(args))
        mcs_qlike = _evaluate.model_confidence_set(qlike_losses, seed=_seed(args))
        header += ["mcs_mse", "mcs_qlike"]
        for row in rows:
            row.append(int(row[0] in mcs_mse.included))
            row.append(int(row[0] in mcs_qlike.included))
    _write_csv(args.out, header, rows)
    return 0


def cmd_simulate(args):
    with open(args.spec) as fh:
        spec = _model.ModelSpec.from_dict(json.load(fh))
    with open(args.params) as fh:
        params = _model.ParamSet.from_dict(json.load(fh))
    panel = _model.simulate(spec, params, args.periods, seed=_seed(args))
    _panel.save_panel_csv(panel, args.out)
    logger.info("simulated %d x %d panel -> %s", panel.n_obs, panel.n_series, args.out)
    return 0


@dataclass
class RunConfig:
    """Validated configuration for a full pipeline run."""

    input: str
    format: str
    split_date: dt.date
    models: list
    fit_options: dict
    evaluate_options: dict
    output_dir: str
    seed: int

    @classmethod
    def from_file(cls, path):
        with open(path) as fh:
            raw = json.load(fh)
        models = raw.get("models", [])
        if not models:
            raise ValueError("config must list at least one model")
        if len(set(models)) != len(models):
            raise ValueError("duplicate model ids in config")
        for m in models:
            if m not in MODEL_IDS:
                raise ValueError(f"unknown model id {m!r}; choose from {sorted(MODEL_IDS)}")
        input_path = raw["input"]
        if not Path(input_path).exists():
            raise ValueError(f"input file {input_path!r} does not exist")
        return cls(
            input=input_path,
            format=raw.get("format", "auto"),
            split_date=_parse_split(raw.get("split_date")),
            models=models,
            fit_options=raw.get("fit", {}),
            evaluate_options=raw.get("evaluate", {}),
            output_dir=raw.get("output_dir", "vmemsec_run"),
            seed=int(raw.get("seed", 0)),
        )


def run_pipeline(config):
    """Run ingest -> factor -> cluster -> fit -> evaluate -> report.

    Returns the artifact directory.  Any stage failure raises StageError with
    the stage name; artifacts written before the failure are left in place.
    """
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    artifacts = []

    def track(path):
        artifacts.append(str(Path(path).relative_to(out)))
        return path

    stage = "ingest"
    try:
        panel = _panel.load_panel_csv(config.input, split_date=config.split_date,
                                      fmt=config.format)
        _panel.save_panel_csv(panel, track(out / "panel.csv"))

        stage = "factor"
        fac = None
        if any(MODEL_IDS[m][0] == "vmem-sec" for m in config.models):
            fac = _factor.first_principal_component(panel)
            _write_csv(track(out / "factor.csv"), ["date", "p"],
                       [[d.isoformat(), _fmt(p)]
                        for d, p in zip(panel.dates, fac.scores)])
            _write_csv(track(out / "factor_loadings.csv"), ["ticker", "c"],
                       [[t, _fmt(c)] for t, c in zip(panel.tickers, fac.loadings)])

        fit_kwargs = dict(config.fit_options)
        fit_kwargs.pop("seed", None)
        options = FitOptions(seed=config.seed, **fit_kwargs)
        loss_names = list(config.evaluate_options.get("losses", ["mse", "qlike"]))
        if unknown := set(loss_names) - {"mse", "qlike"}:
            raise ValueError(f"unknown losses in config: {sorted(unknown)}")

        stage = "cluster"
        cluster_specs = {}
        for model_id in config.models:
            variant, parameterization = MODEL_IDS[model_id]
            if parameterization != "clustered":
                continue
            result = _cluster.clustering_pipeline(
                panel, fac if variant == "vmem-sec" else None,
                options=options, variant=variant,
            )
            cluster_specs[model_id] = result.model_spec
            rows = []
            for t in panel.tickers:
                theta_g = (result.theta_partition.assignment[t]
                           if result.theta_partition else "")
                rows.append([t, result.ab_partition.assignment[t], theta_g])
            _write_csv(track(out / f"clusters_{model_id}.csv"),
                       ["ticker", "ab_group", "theta_group"], rows)
            _write_dendrogram(track(out / f"dendrogram_ab_{model_id}.csv"),
                              result.ab_dendrogram)
            if result.theta_dendrogram is not None:
                _write_dendrogram(track(out / f"dendrogram_theta_{model_id}.csv"),
                                  result.theta_dendrogram)

        summary_rows = []
        loss_table = {}
        for model_id in config.models:
            stage = f"fit:{model_id}"
            variant, parameterization = MODEL_IDS[model_id]
            if model_id in cluster_specs:
                spec = cluster_specs[model_id]
            else:
                spec = _model.ModelSpec.for_tickers(variant, parameterization,
                                                    panel.tickers)
            result = fit(panel, fac, spec, options)
            with open(track(out / f"fit_{model_id}.json"), "w") as fh:
                json.dump(result.to_dict(), fh, indent=2)

            filt = _model.filter_paths(panel, spec, result.params)
            mu = np.exp(filt.ln_mu)
            _write_csv(
                track(out / f"fitted_{model_id}.csv"),
                ["date", "ticker", "observed", "fitted"],
                [[d.isoformat(), tic, _fmt(panel.y[t, i]), _fmt(mu[t, i])]
                 for t, d in enumerate(panel.dates)
                 for i, tic in enumerate(panel.tickers)],
            )
            if spec.is_sec:
                _write_csv(
                    track(out / f"common_component_{model_id}.csv"),
                    ["date", "exp_xi"],
                    [[d.isoformat(), _fmt(np.exp(filt.xi[t]))]
                     for t, d in enumerate(panel.dates)],
                )
                _write_csv(
                    track(out / f"decomposition_{model_id}.csv"),
                    ["date", "ticker", "mu", "exp_varsigma"],
                    [[d.isoformat(), tic, _fmt(mu[t, i]),
                      _fmt(np.exp(filt.varsigma[t, i]))]
                     for t, d in enumerate(panel.dates)
                     for i, tic in enumerate(panel.tickers)],
                )

            stage = f"evaluate:{model_id}"
            windows = ["is"] + (["oos"] if panel.has_split else [])
            loss_rows = []
            for window in windows:
                y_w = panel.y[panel.window_rows(window)]
                mu_w = _evaluate.forecast_one_step(panel, spec, result.params, window)
                for name in loss_names:
                    fn = _evaluate.loss_mse if name == "mse" else _evaluate.loss_qlike
                    ls = fn(y_w, mu_w, model_id=model_id, window=window)
                    loss_rows.append([window, name, _fmt(ls.aggregate)])
                    loss_table[(model_id, window, name)] = ls
            _write_csv(track(out / f"losses_{model_id}.csv"),
                       ["window", "loss", "value"], loss_rows)

            aic, bic = _evaluate.information_criteria(result.loglik, result.n_free,
                                                      panel.n_train)
            summary_rows.append([model_id, _fmt(result.loglik), result.n_free,
                                 _fmt(aic), _fmt(bic)])

        stage = "report"
        header = ["model", "loglik", "n_free", "aic", "bic"]
        windows = ["is"] + (["oos"] if panel.has_split else [])
        for window in windows:
            for name in loss_names:
                header.append(f"{name}_{window}")
                for row, model_id in zip(summary_rows, config.models):
                    row.append(_fmt(loss_table[(model_id, window, name)].aggregate))
        ev = config.evaluate_options
        if ev.get("mcs", False) and len(config.models) >= 2:
            for window in windows:
                for name in loss_names:
                    mcs = _evaluate.model_confidence_set(
                        [loss_table[(m, window, name)] for m in config.models],
                        alpha=ev.get("alpha", 0.05),
                        n_bootstrap=ev.get("n_bootstrap", 1000),
                        block_length=ev.get("block_length", 20),
                        seed=config.seed,
                    )
                    header.append(f"mcs_{name}_{window}")
                    for row, model_id in zip(summary_rows, config.models):
                        row.append(int(model_id in mcs.included))
        _write_csv(track(out / "summary.csv"), header, summary_rows)

        with open(out / "manifest.json", "w") as fh:
            json.dump({"artifacts": sorted(artifacts)}, fh, indent=2)
    except StageError:
        raise
    except Exception as exc:
        raise StageError(stage, exc) from exc
    return out


def cmd_run(args):
    config = RunConfig.from_file(args.config)
    if args.seed is not None:
        config.seed = args.seed
    out = run_pipeline(config)
    logger.info("pipeline artifacts in %s", out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="vmemsec",
        description="Volatility panels under multiplicative error models "
                    "with spillovers and co-movement",
    )
    parser.add_argument("--seed", type=int, default=None, help="random seed")
    parser.add_argument("--threads", type=int, default=1,
                        help="reserved; stages currently run sequentially")
    parser.add_argument("--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="build a panel CSV from raw data")
    p.add_argument("--input", required=True)
    p.add_argument("--format", choices=["long", "wide", "auto"], default="auto")
    p.add_argument("--split-date", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("factor", help="extract the principal-component factor")
    p.add_argument("--panel", required=True)
    p.add_argument("--split-date", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_factor)

    p = sub.add_parser("cluster", help="run the clustering pipeline")
    p.add_argument("--panel", required=True)
    p.add_argument("--variant", choices=["vmem-sec", "vmem"], default="vmem-sec")
    p.add_argument("--split-date", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("fit", help="estimate one model")
    p.add_argument("--panel", required=True)
    p.add_argument("--model", "--spec", dest="model", required=True,
                   help=f"one of {sorted(MODEL_IDS)} or a spec JSON path")
    p.add_argument("--split-date", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("forecast", help="one-step forecasts from a fit file")
    p.add_argument("--fit", required=True)
    p.add_argument("--panel", required=True)
    p.add_argument("--window", choices=["is", "oos"], default="is")
    p.add_argument("--split-date", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="loss report over fitted models")
    p.add_argument("--fits", required=True, help="directory of fit JSON files")
    p.add_argument("--panel", required=True)
    p.add_argument("--window", choices=["is", "oos"], default="is")
    p.add_argument("--split-date", default=None)
    p.add_argument("--mcs", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("simulate", help="draw a synthetic panel")
    p.add_argument("--spec", required=True)
    p.add_argument("--params", required=True)
    p.add_argument("--periods", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("run", help="full pipeline from a config file")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_run)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except StageError as exc:
        print(f"error {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"error [{args.command}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
