"""Propensity-score-weighted borrowing-by-parts power priors for external control data."""

__version__ = "0.1.0"

from .borrowing import BorrowingFit, Strategy, fit_borrowing
from .distributions import RngStream
from .estimator import PSWBPPRegressor
from .exceptions import BorrowkitError, SchemaError
from .inference import (
    ArmData,
    CalibrationConfig,
    EffectSummary,
    MpiReport,
    PowerParams,
    calibrate_power_params,
    control_posterior,
    mpi_mean,
    mpi_variance,
)
from .propensity import CovariateMatrix, PropensityWeighter, WeightVector, fit_logistic
from .simulation import GenConfig, MetricsRow, evaluate, run_study, scenario_table

__all__ = [
    "ArmData",
    "BorrowingFit",
    "BorrowkitError",
    "CalibrationConfig",
    "CovariateMatrix",
    "EffectSummary",
    "GenConfig",
    "MetricsRow",
    "MpiReport",
    "PSWBPPRegressor",
    "PowerParams",
    "PropensityWeighter",
    "RngStream",
    "SchemaError",
    "Strategy",
    "WeightVector",
    "calibrate_power_params",
    "control_posterior",
    "evaluate",
    "fit_borrowing",
    "fit_logistic",
    "mpi_mean",
    "mpi_variance",
    "run_study",
    "scenario_table",
]
