"""Operator-level CCC-ARCH models for functional time series.

Simulation, Yule-Walker estimation, quantile-curve forecasting and residual
diagnostics for curves sampled on a midpoint grid of [0, 1].
"""

from .errors import OparchError
from .estimate import FitResult, compute_scores, fit, select_K_tve
from .forecast import backtest, forecast_sigma, quantile_curve, violation_rate
from .function_space import EigenBasis, Grid, GridFunction, make_basis, make_kernel
from .kernels import BACKEND
from .model import CccParams, stationarity_report
from .simulate import simulate

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CccParams",
    "EigenBasis",
    "FitResult",
    "Grid",
    "GridFunction",
    "OparchError",
    "backtest",
    "compute_scores",
    "fit",
    "forecast_sigma",
    "make_basis",
    "make_kernel",
    "quantile_curve",
    "select_K_tve",
    "simulate",
    "stationarity_report",
    "violation_rate",
]
