"""hetcurve: estimation of the CDF of conditional average treatment effects.

Implements a cross-fitted plug-in estimator, a Grenander-type monotone
estimator with cube-root-rate confidence intervals, and first-order spline
approximation estimators with pointwise intervals and simultaneous bands,
for binary-treatment binary-outcome data.
"""

from ._core import BACKEND
from .curve import JumpLinearCurve, big_gamma_onestep, gamma_plugin
from .dataset import Dataset, FoldAssignment, load_csv, partition_folds
from .grenander import GrenanderFit, chernoff_ci, fit_grenander
from .monotone import gcm, gcm_derivative, pava, rearrange
from .nuisance import (LearnerSpec, LevelOneData, cross_fit,
                       load_external_predictions, pseudo_outcome)
from .sim import SimpleDgm, SyntheticDgm, draw, run_experiment, scenario_preset, true_gamma
from .spline import (HatBasis, SplineFit, constrained_spline, fit_spline,
                     monotonize, pointwise_ci, tsup_band)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "__version__",
    "Dataset",
    "FoldAssignment",
    "load_csv",
    "partition_folds",
    "LearnerSpec",
    "LevelOneData",
    "cross_fit",
    "load_external_predictions",
    "pseudo_outcome",
    "JumpLinearCurve",
    "gamma_plugin",
    "big_gamma_onestep",
    "gcm",
    "gcm_derivative",
    "pava",
    "rearrange",
    "GrenanderFit",
    "fit_grenander",
    "chernoff_ci",
    "HatBasis",
    "SplineFit",
    "fit_spline",
    "pointwise_ci",
    "tsup_band",
    "constrained_spline",
    "monotonize",
    "SimpleDgm",
    "SyntheticDgm",
    "draw",
    "true_gamma",
    "run_experiment",
    "scenario_preset",
]
