"""Gaussian soft regression models and loss-optimal prediction reframing.

Convert any crisp regressor into a two-parameter (mu, sigma) soft model by
enrichment, then compute loss-optimal predictions for bid, asymmetric and
rejection-rule loss families, with an experiment harness for parameter
grids, rank tables and significance tests.
"""

from .data import Dataset, FoldSplit, ShiftStats, load_csv, shift_stats, split_two_fold_ordered
from .enrichment import SoftModel, enrich
from .losses import Decision, LossSpec, Predict, REJECT, Reject, eval_loss, parse_loss
from .regressors import NormalPrediction, fit_base, fit_knn, fit_ols, fit_tree
from .reframing import reframe

__version__ = "0.1.0"

__all__ = [
    "Dataset",
    "FoldSplit",
    "ShiftStats",
    "NormalPrediction",
    "SoftModel",
    "LossSpec",
    "Decision",
    "Predict",
    "Reject",
    "REJECT",
    "load_csv",
    "split_two_fold_ordered",
    "shift_stats",
    "fit_base",
    "fit_ols",
    "fit_knn",
    "fit_tree",
    "enrich",
    "eval_loss",
    "parse_loss",
    "reframe",
    "__version__",
]
