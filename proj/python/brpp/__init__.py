"""Post-processing of ensemble forecasts of spatial maxima with bivariate
Brown-Resnick processes."""

from ._core import (
    Anisotropy,
    BivariateModel,
    BrppError,
    GevParams,
    UnivariateModel,
    conditional_simulate,
    crps_empirical,
    crps_gev,
    energy_score,
    extremal_coeff,
    fit_gev,
    fmadogram,
    from_gumbel,
    gev_cdf,
    gev_quantile,
    postprocess,
    simulate_br,
    theta_from_madogram,
    to_gumbel,
    validate_model,
    variogram,
)

__all__ = [
    "Anisotropy",
    "BivariateModel",
    "BrppError",
    "GevParams",
    "UnivariateModel",
    "conditional_simulate",
    "crps_empirical",
    "crps_gev",
    "energy_score",
    "extremal_coeff",
    "fit_gev",
    "fmadogram",
    "from_gumbel",
    "gev_cdf",
    "gev_quantile",
    "postprocess",
    "simulate_br",
    "theta_from_madogram",
    "to_gumbel",
    "validate_model",
    "variogram",
]
