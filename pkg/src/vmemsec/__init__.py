"""Volatility panels under multiplicative error models with spillover and
co-movement components: construction, estimation, clustering, forecasting,
and evaluation."""

from .panel import (
    OhlcRecord,
    VolatilityPanel,
    build_panel,
    load_panel_csv,
    parkinson_hlr,
    save_panel_csv,
)
from .factor import PcFactor, first_principal_component
from .model import (
    FilterOutput,
    ModelSpec,
    ParamSet,
    PerEquationCoefficients,
    check_constraints,
    count_parameters,
    filter_paths,
    log_likelihood,
    per_equation_coefficients,
    save_filter_csv,
    simulate,
    targeting_intercept,
)
from .estimate import (
    EstimationError,
    FitOptions,
    FitResult,
    UnivariateFit,
    fit,
    fit_univariate_mem_sec,
    sandwich_std_errors,
)
from .cluster import (
    ClusteringResult,
    Dendrogram,
    Partition,
    adjusted_rand_index,
    arma11_distance,
    arma_distance,
    arma_distance_matrix,
    clustering_pipeline,
    hierarchical_cluster,
    theta_distance,
    theta_distance_matrix,
)
from .evaluate import (
    LossSeries,
    McsResult,
    forecast_one_step,
    information_criteria,
    loss_mse,
    loss_qlike,
    model_confidence_set,
)

__version__ = "0.1.0"

__all__ = [
    "OhlcRecord", "VolatilityPanel", "build_panel", "load_panel_csv",
    "parkinson_hlr", "save_panel_csv",
    "PcFactor", "first_principal_component",
    "FilterOutput", "ModelSpec", "ParamSet", "PerEquationCoefficients",
    "check_constraints", "count_parameters", "filter_paths", "log_likelihood",
    "per_equation_coefficients", "save_filter_csv", "simulate",
    "targeting_intercept",
    "EstimationError", "FitOptions", "FitResult", "UnivariateFit", "fit",
    "fit_univariate_mem_sec", "sandwich_std_errors",
    "ClusteringResult", "Dendrogram", "Partition", "adjusted_rand_index",
    "arma11_distance", "arma_distance", "arma_distance_matrix",
    "clustering_pipeline", "hierarchical_cluster", "theta_distance",
    "theta_distance_matrix",
    "LossSeries", "McsResult", "forecast_one_step", "information_criteria",
    "loss_mse", "loss_qlike", "model_confidence_set",
]
