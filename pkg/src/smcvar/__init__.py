"""Sequential Monte Carlo with ancestral-origin standard errors."""

from .benchmarks import (BearingsModel, ChangePointModel, bearings_model, changepoint_model,
                         read_series, simulate_bearings, simulate_changepoint, write_series)
from .engine import Population, run_filter
from .errors import (AmbiguousScheduleError, ContractViolationError, DegenerateWeightsError,
                     EnumerationBudgetError, InvalidConfigurationError, OracleError,
                     PopulationExtinctionError, SMCError)
from .estimators import (Diagnostics, FilterOutput, point_estimate, var_ancestral,
                         var_gilks_berzuini, var_sample_split)
from .model import GenericModel, ModelSpec, ShiftedWeights, make_generic_model
from .oracle import (DiscreteHMM, exact_posterior, exact_sigma2, exact_tau_star,
                     exhaustive_prototype_check)
from .resampling import Always, CvThreshold, Never, Scheme, gamma_fn, parse_policy

__version__ = "0.1.0"

__all__ = [
    "Always", "AmbiguousScheduleError", "BearingsModel", "ChangePointModel",
    "ContractViolationError", "CvThreshold", "DegenerateWeightsError", "Diagnostics",
    "DiscreteHMM", "EnumerationBudgetError", "FilterOutput", "GenericModel",
    "InvalidConfigurationError", "ModelSpec", "Never", "OracleError", "Population",
    "PopulationExtinctionError", "SMCError", "Scheme", "ShiftedWeights",
    "bearings_model", "changepoint_model", "exact_posterior", "exact_sigma2",
    "exact_tau_star", "exhaustive_prototype_check", "gamma_fn", "make_generic_model",
    "parse_policy", "point_estimate", "read_series", "run_filter", "simulate_bearings",
    "simulate_changepoint", "var_ancestral", "var_gilks_berzuini", "var_sample_split",
    "write_series",
]
