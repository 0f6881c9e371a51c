"""Debiased kernel estimation of linear functionals with kernel ridge Riesz representers."""

__version__ = "0.1.0"

from .dml import DMLResult, delta_ratio, estimate, fit_dml, make_folds, tune
from .errors import (ConfigError, DegenerateDataError, HarnessError, InputError, NumericalError,
                     OracleError, RieszDMLError)
from .functionals import (ATE, ATEDS, ATT, CATE, Evaluation, GaussianDensity, Incremental,
                          TabulatedDensity, build_extended_kernel, ktilde, m_value, m_values)
from .kernels import DiscreteIdentity, Gaussian, KernelSpec, c_max_of, eval_kernel, gram, median_bandwidth
from .krr import fit_krr, predict, tune_krr
from .riesz import alpha_at, fit_riesz, tune_riesz

__all__ = [
    "ATE", "ATEDS", "ATT", "CATE", "ConfigError", "DMLResult", "DegenerateDataError", "DiscreteIdentity",
    "Evaluation", "Gaussian", "GaussianDensity", "HarnessError", "Incremental", "InputError", "KernelSpec",
    "NumericalError", "OracleError", "RieszDMLError", "TabulatedDensity", "alpha_at", "build_extended_kernel",
    "c_max_of", "delta_ratio", "estimate", "eval_kernel", "fit_dml", "fit_krr", "fit_riesz", "gram",
    "ktilde", "m_value", "m_values", "make_folds", "median_bandwidth", "predict", "tune", "tune_krr",
    "tune_riesz",
]
