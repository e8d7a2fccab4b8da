"""Verification harness: distance statistics, reports and experiment runners."""

from .defaults import DEFAULTS_VERSION, defaults_for
from .distance import DistanceStat, grid_sup_norm, ks_to_cdf, two_sample_ks
from .report import ExperimentReport, VerdictRule
from .runners import (
    finite_n_density,
    run_gaussian_approx,
    run_hr_density,
    run_hr_maxima,
    run_logchi_tail,
    run_pickands,
    run_sojourn,
    run_sup_tail,
    run_threshold_theorem,
)

__all__ = [
    "DEFAULTS_VERSION",
    "DistanceStat",
    "ExperimentReport",
    "VerdictRule",
    "defaults_for",
    "finite_n_density",
    "grid_sup_norm",
    "ks_to_cdf",
    "run_gaussian_approx",
    "run_hr_density",
    "run_hr_maxima",
    "run_logchi_tail",
    "run_pickands",
    "run_sojourn",
    "run_sup_tail",
    "run_threshold_theorem",
    "two_sample_ks",
]
