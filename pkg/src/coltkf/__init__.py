"""Tobit Kalman filtering for censored scalar measurements with AR(1) coloured noises."""

from .censored_moments import (
    CensorBand,
    CensoredSummary,
    censored_cross_cov,
    censored_mean,
    censored_mgf,
    censored_skewness,
    censored_summary,
    censored_third_moment,
    censored_variance,
    mc_censored_summary,
    uncensored_prob,
)
from .estimation import FitConfig, FitReport, censored_log_likelihood, fit_ar_params
from .filters import FilterKind, FilterState, FilterTrace, run_filter
from .gaussian_core import GaussianSpec, RngHandle, sample_mvn
from .harness import ExperimentConfig, RmseTable, builtin_experiment, rmse, run_experiment
from .state_space import ArParams, AugmentedModel, ColouredStateSpace, Trajectory, augment, simulate

__all__ = [
    "ArParams",
    "AugmentedModel",
    "CensorBand",
    "CensoredSummary",
    "ColouredStateSpace",
    "ExperimentConfig",
    "FilterKind",
    "FilterState",
    "FilterTrace",
    "FitConfig",
    "FitReport",
    "GaussianSpec",
    "RmseTable",
    "RngHandle",
    "Trajectory",
    "augment",
    "builtin_experiment",
    "censored_cross_cov",
    "censored_log_likelihood",
    "censored_mean",
    "censored_mgf",
    "censored_skewness",
    "censored_summary",
    "censored_third_moment",
    "censored_variance",
    "fit_ar_params",
    "mc_censored_summary",
    "rmse",
    "run_experiment",
    "run_filter",
    "sample_mvn",
    "simulate",
    "uncensored_prob",
]

__version__ = "0.1.0"
